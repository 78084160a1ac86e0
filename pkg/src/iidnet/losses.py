"""Training objective: reconstruction consistency plus reflectance consistency.

All terms operate on channel-first tensors and stay inside the autodiff
graph. The combined objective over a view pair is

    w_rec_l1 * (L1(I1, I1') + L1(I2, I2'))
  - w_rec_cos * (cos(I1, I1') + cos(I2, I2'))
  + w_ref_match * L1(R1, R2)
  + w_ref_lum * (lum(R1) + lum(R2))
  + w_illum * (L1(c1, c1') + L1(c2, c2'))

where primes are network estimates, reconstructions come from the
shading * illuminant * reflectance recomposition, and lum() pulls the mean
reflectance luminance toward 0.5 to pin down the scale ambiguity. The
cosine term is subtracted (it is maximized), so the total is bounded below
by -2 * w_rec_cos.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .image import LUMINANCE_WEIGHTS
from .network import reconstruct_tensors

COS_EPS = 1e-8


@dataclass(frozen=True)
class LossWeights:
    reconst_l1: float = 3.0
    reconst_cos: float = 1.0
    reflect_match: float = 2.0
    reflect_lum: float = 1.0
    illum: float = 1.0

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            if getattr(self, name) < 0:
                raise ValueError(f"LossWeights.{name} must be >= 0")

    def to_json(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}

    @classmethod
    def from_json(cls, d: dict) -> "LossWeights":
        return cls(**d)


@dataclass(frozen=True)
class LossBreakdown:
    """Per-term scalars of one training objective evaluation.

    `total` is always the exact float recombination of the parts with the
    weights used, so logs can be re-derived term by term.
    """

    total: float
    reconst_l1: float
    reconst_cos: float
    reflect_pair_l1: float
    lum_1: float
    lum_2: float
    illum_l1: float

    @classmethod
    def from_parts(cls, w: LossWeights, reconst_l1: float, reconst_cos: float,
                   reflect_pair_l1: float, lum_1: float, lum_2: float,
                   illum_l1: float) -> "LossBreakdown":
        total = (w.reconst_l1 * reconst_l1
                 - w.reconst_cos * reconst_cos
                 + w.reflect_match * reflect_pair_l1
                 + w.reflect_lum * (lum_1 + lum_2)
                 + w.illum * illum_l1)
        return cls(total, reconst_l1, reconst_cos, reflect_pair_l1, lum_1, lum_2, illum_l1)

    def to_json(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


def l1(a, b) -> Tensor:
    """Mean absolute difference over all elements."""
    return ad.tmean(ad.absolute(ad.sub(a, b)))


def cos_sim(a, b) -> Tensor:
    """Mean per-pixel cosine similarity over the channel axis of (B,C,H,W).

    Pixels where either vector is exactly zero contribute ~0 (the epsilon
    keeps the ratio finite and its gradient defined).
    """
    a, b = ad.as_tensor(a), ad.as_tensor(b)
    num = ad.tsum(ad.mul(a, b), axis=1, keepdims=True)
    den = ad.add(ad.mul(ad.l2_norm_channels(a), ad.l2_norm_channels(b)), COS_EPS)
    return ad.tmean(ad.div(num, den))


def lum_loss(r) -> Tensor:
    """Mean |0.5 - luminance| over pixels of a (B,3,H,W) reflectance."""
    r = ad.as_tensor(r)
    w = Tensor(np.array(LUMINANCE_WEIGHTS, dtype=r.data.dtype).reshape(1, 3, 1, 1))
    lum = ad.tsum(ad.mul(r, w), axis=1, keepdims=True)
    return ad.tmean(ad.absolute(ad.sub(0.5, lum)))


def reconst_loss(i1, i2, ih1, ih2, w: LossWeights) -> tuple[Tensor, dict[str, float]]:
    """Weighted reconstruction term; returns the graph node and float parts."""
    part_l1 = ad.add(l1(i1, ih1), l1(i2, ih2))
    part_cos = ad.add(cos_sim(i1, ih1), cos_sim(i2, ih2))
    node = ad.sub(ad.mul(part_l1, w.reconst_l1), ad.mul(part_cos, w.reconst_cos))
    return node, {"reconst_l1": part_l1.item(), "reconst_cos": part_cos.item()}


def reflect_loss(r1, r2, c1, c2, ch1, ch2, w: LossWeights) -> tuple[Tensor, dict[str, float]]:
    """Weighted reflectance-consistency term.

    c1/c2 are the simulated illuminant colors (the self-supervision labels);
    ch1/ch2 the network estimates.
    """
    pair = l1(r1, r2)
    lum1, lum2 = lum_loss(r1), lum_loss(r2)
    illum = ad.add(l1(c1, ch1), l1(c2, ch2))
    node = ad.add(
        ad.add(ad.mul(pair, w.reflect_match), ad.mul(ad.add(lum1, lum2), w.reflect_lum)),
        ad.mul(illum, w.illum),
    )
    parts = {"reflect_pair_l1": pair.item(), "lum_1": lum1.item(), "lum_2": lum2.item(),
             "illum_l1": illum.item()}
    return node, parts


def total_loss(i1, i2, c1, c2, decomp1: tuple[Tensor, Tensor, Tensor],
               decomp2: tuple[Tensor, Tensor, Tensor],
               w: LossWeights) -> tuple[Tensor, LossBreakdown]:
    """Full objective for a pair of views of the same scene.

    decomp1/decomp2 are (reflectance, gray shading, illuminant) tensor
    triples from the network. Returns the differentiable scalar node and the
    float breakdown.
    """
    r1, s1, chat1 = decomp1
    r2, s2, chat2 = decomp2
    ih1 = reconstruct_tensors(r1, s1, chat1)
    ih2 = reconstruct_tensors(r2, s2, chat2)
    rec_node, rec_parts = reconst_loss(i1, i2, ih1, ih2, w)
    ref_node, ref_parts = reflect_loss(r1, r2, c1, c2, chat1, chat2, w)
    node = ad.add(rec_node, ref_node)
    breakdown = LossBreakdown.from_parts(w, **rec_parts, **ref_parts)
    return node, breakdown
