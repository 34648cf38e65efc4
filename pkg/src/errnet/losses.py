"""Reconstruction and band-restricted spectral losses.

Spectral losses are L1 distances between orthonormal DCT coefficients,
averaged over batch, channels and the band's index count, so

    |zero| * L_zf + |low| * L_lf + |high| * L_hf == sum |dF| / (B * C)

for any pair and cutoff.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .metrics import ssim_tensor
from .spectral import band_mask, dct2
from .tensor import ShapeError, Tensor, tabs

TERMS = ("lzf", "llf", "lhf")


def _check(a: Tensor, b: Tensor, name: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} differ")


def l1_loss(a: Tensor, b: Tensor) -> Tensor:
    _check(a, b, "l1_loss")
    return tabs(a - b).mean()


def ssim_loss(a: Tensor, b: Tensor) -> Tensor:
    _check(a, b, "ssim_loss")
    return 1.0 - ssim_tensor(a, b)


def spectral_diff(out: Tensor, gt: Tensor) -> Tensor:
    _check(out, gt, "spectral loss")
    return dct2(out).coeffs - dct2(gt).coeffs


def band_l1(out: Tensor, gt: Tensor, band: str, k: int, diff: Tensor | None = None) -> Tensor:
    if diff is None:
        diff = spectral_diff(out, gt)
    mask = band_mask(diff.shape, band, k)
    count = float(mask.sum())
    if count == 0:
        return Tensor(np.zeros((), dtype=diff.dtype))
    b, c = diff.shape[0], diff.shape[1]
    return (tabs(diff) * mask.astype(diff.dtype)).sum() / (b * c * count)


def zero_freq_loss(out: Tensor, gt: Tensor) -> Tensor:
    """Mean over batch and channels of |DC(out) - DC(gt)|."""
    return band_l1(out, gt, "zero", 1)


def low_freq_loss(out: Tensor, gt: Tensor, k: int) -> Tensor:
    return band_l1(out, gt, "low", k)


def high_freq_loss(out: Tensor, gt: Tensor, k: int) -> Tensor:
    return band_l1(out, gt, "high", k)


@dataclass
class StageBundle:
    o_s1: Tensor
    o_s2: Tensor
    o_s3: Tensor
    feat_s1: Tensor | None = None
    feat_s2: Tensor | None = None

    @property
    def outputs(self) -> tuple[Tensor, Tensor, Tensor]:
        return (self.o_s1, self.o_s2, self.o_s3)


@dataclass
class LossReport:
    l1_s1: Tensor
    l1_s2: Tensor
    l1_s3: Tensor
    ssim_s1: Tensor
    ssim_s2: Tensor
    ssim_s3: Tensor
    lzf: Tensor
    llf: Tensor
    lhf: Tensor
    total: Tensor

    def components(self) -> list[Tensor]:
        return [getattr(self, f.name) for f in fields(self) if f.name != "total"]

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name).item() for f in fields(self)}


def total_loss(
    bundle: StageBundle,
    gt: Tensor,
    k: int,
    use_zf: bool = True,
    use_lf: bool = True,
    use_hf: bool = True,
) -> LossReport:
    """Per-stage L1 + SSIM loss plus the stage-tied spectral regularizers, unit weights."""
    outs = bundle.outputs
    if any(o is None for o in outs):
        raise ValueError("total_loss needs all three stage outputs")
    zero = Tensor(np.zeros((), dtype=gt.dtype))
    l1s = [l1_loss(o, gt) for o in outs]
    ssims = [ssim_loss(o, gt) for o in outs]
    lzf = zero_freq_loss(bundle.o_s1, gt) if use_zf else zero
    llf = low_freq_loss(bundle.o_s2, gt, k) if use_lf else zero
    lhf = high_freq_loss(bundle.o_s3, gt, k) if use_hf else zero
    total = l1s[0]
    for term in l1s[1:] + ssims + [lzf, llf, lhf]:
        total = total + term
    return LossReport(*l1s, *ssims, lzf, llf, lhf, total)
