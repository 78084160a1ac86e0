"""Linear-light RGB image containers and elementwise radiometric algebra.

All image data is scene-referred linear radiance stored as float64 arrays.
Values are nonnegative and unbounded above: the nominal display range is
[0, 1] but simulated exposure changes may push values past 1, and they are
only clipped at display-export time (see `fileio`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, StructuralError

# Rec. 709 luma coefficients; the three constants sum to 1.0 exactly in
# float64, which several identities below rely on.
LUMINANCE_WEIGHTS = (0.2126, 0.7152, 0.0722)

# Offset inside the log before averaging, so the geometric mean is defined
# on images with zero-valued pixels.
GEOMEAN_EPS = 1e-6


def _as_float_array(data, name: str) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise StructuralError(f"{name}: data contains NaN or Inf")
    if np.any(arr < 0):
        raise StructuralError(f"{name}: data contains negative values")
    return arr


@dataclass(frozen=True)
class LinearImage:
    """H x W x 3 nonnegative linear-radiance raster. Immutable."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_float_array(self.data, "LinearImage")
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise StructuralError(f"LinearImage: expected (H, W, 3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise StructuralError("LinearImage: empty image")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class GrayMap:
    """H x W nonnegative scalar field (gray shading, luminance)."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_float_array(self.data, "GrayMap")
        if arr.ndim != 2:
            raise StructuralError(f"GrayMap: expected (H, W), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise StructuralError("GrayMap: empty map")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ColorVec:
    """Nonnegative RGB triple (an illuminant color, a gain vector)."""

    r: float
    g: float
    b: float

    def __post_init__(self):
        for name, v in zip("rgb", (self.r, self.g, self.b)):
            if not np.isfinite(v) or v < 0:
                raise StructuralError(f"ColorVec.{name}: must be finite and >= 0, got {v}")

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.g, self.b], dtype=np.float64)

    def reciprocal(self) -> "ColorVec":
        if min(self.r, self.g, self.b) <= 0:
            raise StructuralError("ColorVec.reciprocal: components must be > 0")
        return ColorVec(1.0 / self.r, 1.0 / self.g, 1.0 / self.b)


def _check_same_dims(a, b, op: str):
    if a.data.shape[:2] != b.data.shape[:2]:
        raise StructuralError(f"{op}: dimension mismatch {a.data.shape} vs {b.data.shape}")


def luminance(img: LinearImage) -> GrayMap:
    """Per-pixel luminance, the weighted channel sum with Rec. 709 weights."""
    w = np.array(LUMINANCE_WEIGHTS)
    return GrayMap(img.data @ w)


def geometric_mean_luminance(img: LinearImage) -> float:
    """Log-average luminance: exp(mean(ln(L + eps))).

    The small offset keeps the value defined when some pixels are black;
    for images whose luminances are well above the offset it agrees with
    the plain geometric mean.
    """
    lum = luminance(img).data
    return float(np.exp(np.mean(np.log(lum + GEOMEAN_EPS))))


def scale(img: LinearImage, k: float) -> LinearImage:
    if not np.isfinite(k) or k < 0:
        raise StructuralError(f"scale: factor must be finite and >= 0, got {k}")
    return LinearImage(img.data * k)


def hadamard(a: LinearImage, b: LinearImage) -> LinearImage:
    """Per-pixel channelwise product of two images."""
    _check_same_dims(a, b, "hadamard")
    return LinearImage(a.data * b.data)


def apply_color(img: LinearImage, c: ColorVec) -> LinearImage:
    """Multiply every pixel channelwise by the color vector c."""
    return LinearImage(img.data * c.as_array())


def gray_to_rgb(gm: GrayMap) -> LinearImage:
    """Replicate a scalar field into all three channels."""
    return LinearImage(np.repeat(gm.data[:, :, None], 3, axis=2))


def mean_luminance(img: LinearImage) -> float:
    return float(luminance(img).data.mean())


def require_nonblack(img: LinearImage, op: str) -> None:
    if float(img.data.max()) == 0.0:
        raise DegenerateInputError(f"{op}: image is entirely black")
