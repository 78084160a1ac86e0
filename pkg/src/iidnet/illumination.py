"""Illumination-brightness and -color simulation for self-supervised pairs.

Brightness changes are exposure-value scalings (x 2^v); color changes are
diagonal gain matrices, optionally conjugated by a color-space conversion
matrix when modeling a camera's white-balance transform. Views for training
are drawn by anchoring an image's log-average luminance to 0.18 and then
applying a random (v, c) condition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StructuralError
from .image import ColorVec, LinearImage, apply_color, geometric_mean_luminance, require_nonblack, scale

ANCHOR_LUMINANCE = 0.18
BRIGHTNESS_RANGE = (-1.0, 1.0)
COLOR_RANGE = (0.9, 1.1)

# 3 x 3 evaluation grid: brightness rows (-1, 0, +1 EV), color columns
# (cold white, white, warm white), flattened row-major as conditions 1..9.
GRID_BRIGHTNESS = (-1.0, 0.0, 1.0)
GRID_COLORS = (
    ("cold white", ColorVec(0.9, 1.0, 1.1)),
    ("white", ColorVec(1.0, 1.0, 1.0)),
    ("warm white", ColorVec(1.1, 1.0, 0.9)),
)
GRID_REFERENCE = 5  # 1-based index of the (0 EV, white) grid entry


@dataclass(frozen=True)
class IlluminationCondition:
    """A brightness offset in EV plus an illuminant color."""

    v: float
    color: ColorVec
    label: str = ""

    def __post_init__(self):
        if not np.isfinite(self.v):
            raise StructuralError(f"IlluminationCondition: v must be finite, got {self.v}")
        if min(self.color.r, self.color.g, self.color.b) <= 0:
            raise StructuralError("IlluminationCondition: color must be componentwise > 0")
        if not self.label:
            object.__setattr__(self, "label", f"{self.v:+.2f} EV, {self._color_name()}")

    def _color_name(self) -> str:
        for name, c in GRID_COLORS:
            if (c.r, c.g, c.b) == (self.color.r, self.color.g, self.color.b):
                return name
        return f"({self.color.r:.3f}, {self.color.g:.3f}, {self.color.b:.3f})"

    def to_json(self) -> dict:
        return {"v": self.v, "c": [self.color.r, self.color.g, self.color.b], "label": self.label}


@dataclass(frozen=True)
class WbParams:
    """White-balance gains plus the color-space conversion they act in."""

    alpha: float
    beta: float
    gamma: float
    basis: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        for name, v in zip(("alpha", "beta", "gamma"), (self.alpha, self.beta, self.gamma)):
            if not np.isfinite(v) or v <= 0:
                raise StructuralError(f"WbParams.{name}: must be finite and > 0, got {v}")
        basis = np.asarray(self.basis, dtype=np.float64)
        if basis.shape != (3, 3):
            raise StructuralError(f"WbParams.basis: expected 3x3, got {basis.shape}")
        if not np.all(np.isfinite(basis)) or np.linalg.matrix_rank(basis) < 3:
            raise StructuralError("WbParams.basis: must be a finite full-rank matrix")
        object.__setattr__(self, "basis", basis)


def wb_matrix(p: WbParams) -> np.ndarray:
    """White-balance transform: basis^-1 * diag(gains) * basis."""
    inv_basis = np.linalg.inv(p.basis)
    return inv_basis @ np.diag([p.alpha, p.beta, p.gamma]) @ p.basis


def inverse_wb_matrix(p: WbParams) -> np.ndarray:
    """Inverse white balancing, the color-change simulator's matrix."""
    inv_basis = np.linalg.inv(p.basis)
    return inv_basis @ np.diag([1.0 / p.alpha, 1.0 / p.beta, 1.0 / p.gamma]) @ p.basis


def apply_matrix(img: LinearImage, m: np.ndarray) -> LinearImage:
    """Apply a 3x3 color matrix to every pixel (clamping tiny negatives)."""
    out = img.data @ np.asarray(m, dtype=np.float64).T
    return LinearImage(np.maximum(out, 0.0))


def simulate_brightness(img: LinearImage, v: float) -> LinearImage:
    """Exposure compensation by v EV: every value scaled by exactly 2^v."""
    if not np.isfinite(v):
        raise StructuralError(f"simulate_brightness: v must be finite, got {v}")
    return LinearImage(img.data * (2.0 ** v))


def anchor_exposure(img: LinearImage) -> LinearImage:
    """Scale so the log-average luminance lands on the 0.18 anchor."""
    require_nonblack(img, "anchor_exposure")
    return scale(img, ANCHOR_LUMINANCE / geometric_mean_luminance(img))


def simulate_color(img: LinearImage, c: ColorVec) -> LinearImage:
    """Illumination-color change: per-pixel diagonal gains c."""
    if min(c.r, c.g, c.b) <= 0:
        raise StructuralError("simulate_color: color must be componentwise > 0")
    return apply_color(img, c)


def render_condition(anchored: LinearImage, cond: IlluminationCondition) -> LinearImage:
    return simulate_color(simulate_brightness(anchored, cond.v), cond.color)


def generate_views(img: LinearImage, rng: np.random.Generator, n: int) -> list[tuple[LinearImage, IlluminationCondition]]:
    """Draw n random illumination conditions and render the matching views.

    Per view the draw order is fixed (v, then the three color components) so
    a given generator state always produces the same conditions. The sampled
    condition is returned with each view; it is the self-supervision label
    for the illuminant-color loss term.
    """
    if n < 1:
        raise StructuralError(f"generate_views: n must be >= 1, got {n}")
    anchored = anchor_exposure(img)
    views = []
    for _ in range(n):
        v = float(rng.uniform(*BRIGHTNESS_RANGE))
        c = ColorVec(*(float(x) for x in rng.uniform(COLOR_RANGE[0], COLOR_RANGE[1], size=3)))
        cond = IlluminationCondition(v, c)
        views.append((render_condition(anchored, cond), cond))
    return views


def grid_conditions() -> list[IlluminationCondition]:
    conds = []
    for v in GRID_BRIGHTNESS:
        for name, c in GRID_COLORS:
            conds.append(IlluminationCondition(v, c, label=f"{v:+.0f} EV, {name}"))
    return conds


def evaluation_grid(img: LinearImage) -> list[tuple[LinearImage, IlluminationCondition]]:
    """The deterministic 9-condition grid over the anchored image.

    Entries are ordered row-major by brightness then color; entry 5 (1-based)
    is the anchored image itself (0 EV, white illuminant).
    """
    anchored = anchor_exposure(img)
    return [(render_condition(anchored, cond), cond) for cond in grid_conditions()]
