"""Orthonormal 2D DCT, frequency bands, band exchange and spectrum windows.

Coefficient (u, v) pairs row frequency u with the image height and column
frequency v with the width. Under the orthonormal DCT-II the DC term is
``sqrt(H*W) * mean(x)`` and Parseval holds exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from .metrics import psnr, ssim
from .tensor import ShapeError, Tensor, reshape, separable, transpose

BANDS = ("zero", "low", "high")


@lru_cache(maxsize=None)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix, ``M[u, h] = a(u) cos((2h+1) u pi / 2n)``."""
    h = np.arange(n)
    u = h[:, None]
    m = np.cos((2 * h[None, :] + 1) * u * np.pi / (2 * n)) * np.sqrt(2.0 / n)
    m[0] /= np.sqrt(2.0)
    m.setflags(write=False)
    return m


@dataclass
class Spectrum:
    coeffs: Tensor
    norm: str = "ortho"

    @property
    def shape(self):
        return self.coeffs.shape


def dct2(x: Tensor) -> Spectrum:
    h, w = x.shape[-2:]
    return Spectrum(separable(x, dct_matrix(h), dct_matrix(w)))


def idct2(s: Spectrum | Tensor) -> Tensor:
    c = s.coeffs if isinstance(s, Spectrum) else s
    h, w = c.shape[-2:]
    return separable(c, dct_matrix(h).T, dct_matrix(w).T)


def dct2_array(x: np.ndarray) -> np.ndarray:
    h, w = x.shape[-2:]
    return dct_matrix(h) @ x @ dct_matrix(w).T


def idct2_array(c: np.ndarray) -> np.ndarray:
    h, w = c.shape[-2:]
    return dct_matrix(h).T @ c @ dct_matrix(w)


# ---------------------------------------------------------------------------
# bands
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BandSpec:
    """Cutoff ``k`` over an ``h`` x ``w`` spectrum: zero = {(0,0)},
    low = {u<k and v<k} minus DC, high = {u>=k or v>=k}."""

    k: int
    h: int
    w: int

    def __post_init__(self):
        if not 1 <= self.k <= min(self.h, self.w):
            raise ValueError(f"cutoff k={self.k} outside [1, {min(self.h, self.w)}]")

    def mask(self, band: str) -> np.ndarray:
        return band_mask((self.h, self.w), band, self.k)

    def sizes(self) -> dict[str, int]:
        return {b: int(self.mask(b).sum()) for b in BANDS}


@lru_cache(maxsize=None)
def _band_mask(h: int, w: int, band: str, k: int) -> np.ndarray:
    u = np.arange(h)[:, None]
    v = np.arange(w)[None, :]
    inside = (u < k) & (v < k)
    if band == "zero":
        m = (u == 0) & (v == 0)
    elif band == "low":
        m = inside & ~((u == 0) & (v == 0))
    elif band == "high":
        m = ~inside
    elif band == "fill":  # the k x k corner including DC, k may be 0 or exceed the extent
        m = inside
    elif band == "all":
        m = np.ones((h, w), dtype=bool)
    else:
        raise ValueError(f"unknown band {band!r}")
    m = m.astype(np.float64)
    m.setflags(write=False)
    return m


def band_mask(spec_shape: Sequence[int], band: str, k: int) -> np.ndarray:
    """0/1 mask over the trailing (H, W) of ``spec_shape`` for one band."""
    h, w = spec_shape[-2:]
    if band in BANDS and not 1 <= k <= min(h, w):
        raise ValueError(f"cutoff k={k} outside [1, {min(h, w)}] for a {h}x{w} spectrum")
    return _band_mask(h, w, band, int(k))


def _resolve_mask(shape, band, k) -> np.ndarray:
    if isinstance(band, str):
        return band_mask(shape, band, k)
    m = np.asarray(band, dtype=np.float64)
    if m.shape != tuple(shape[-2:]):
        raise ShapeError(f"mask shape {m.shape} does not match spectrum {shape[-2:]}")
    return m


def exchange_band(a, b, band="zero", k: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Swap the DCT coefficients of ``a`` and ``b`` on ``band``; return both images.

    ``band`` is one of zero/low/high/fill/all or an explicit (H, W) 0/1 mask.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"exchange_band: shapes {a.shape} and {b.shape} differ")
    m = _resolve_mask(a.shape, band, k)
    fa, fb = dct2_array(a), dct2_array(b)
    ea = fa * (1 - m) + fb * m
    eb = fb * (1 - m) + fa * m
    return idct2_array(ea), idct2_array(eb)


def fill_residual_energy(inp, gt, ks: Iterable[int]) -> list[tuple[int, float]]:
    """Squared error left after replacing the k x k corner of ``inp`` with ``gt``'s.

    By Parseval this is the spectral energy of the difference outside the corner.
    """
    d2 = (dct2_array(np.asarray(inp, np.float64)) - dct2_array(np.asarray(gt, np.float64))) ** 2
    h, w = d2.shape[-2:]
    return [(k, float((d2 * (1 - _band_mask(h, w, "fill", int(k)))).sum())) for k in ks]


def progressive_fill_curve(inp, gt, ks: Sequence[int]) -> list[tuple[int, float]]:
    """PSNR against ``gt`` after filling the k x k low-frequency corner from ``gt``."""
    inp = np.asarray(inp, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if inp.shape != gt.shape:
        raise ShapeError(f"progressive_fill_curve: shapes {inp.shape} and {gt.shape} differ")
    fi, fg = dct2_array(inp), dct2_array(gt)
    h, w = inp.shape[-2:]
    curve = []
    for k in ks:
        m = _band_mask(h, w, "fill", int(k))
        filled = idct2_array(fi * (1 - m) + fg * m)
        curve.append((int(k), psnr(filled, gt)))
    return curve


def write_curve_csv(path, curve: Iterable[tuple[int, float]]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["k", "psnr"])
        for k, p in curve:
            out.writerow([k, repr(float(p))])


def read_curve_csv(path) -> list[tuple[int, float]]:
    with open(path, newline="") as fh:
        return [(int(r["k"]), float(r["psnr"])) for r in csv.DictReader(fh)]


# ---------------------------------------------------------------------------
# windows over the spectrum
# ---------------------------------------------------------------------------


def window_partition(s: Spectrum | Tensor, w: int) -> Tensor:
    """[B, C, H, W] -> [B * nh * nw, C, w, w], windows in row-major order."""
    x = s.coeffs if isinstance(s, Spectrum) else s
    b, c, h, wd = x.shape
    if h % w or wd % w:
        raise ShapeError(f"window size {w} does not divide spectrum extents {h}x{wd}")
    nh, nw = h // w, wd // w
    x = reshape(x, (b, c, nh, w, nw, w))
    x = transpose(x, (0, 2, 4, 1, 3, 5))
    return reshape(x, (b * nh * nw, c, w, w))


def window_reverse(windows: Tensor, w: int, h: int, wd: int) -> Tensor:
    n, c = windows.shape[:2]
    nh, nw = h // w, wd // w
    b = n // (nh * nw)
    x = reshape(windows, (b, nh, nw, c, w, w))
    x = transpose(x, (0, 3, 1, 4, 2, 5))
    return reshape(x, (b, c, h, wd))


# ---------------------------------------------------------------------------
# band-wise attribution of two image-to-image systems
# ---------------------------------------------------------------------------


def split_bands(img: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Split into the image of the k x k corner (DC included) and the remainder."""
    f = dct2_array(img)
    m = _band_mask(img.shape[-2], img.shape[-1], "fill", int(k))
    low = idct2_array(f * m)
    return low, img - low


def high_frequency_attribution(
    system_a: Callable[[np.ndarray], np.ndarray],
    system_b: Callable[[np.ndarray], np.ndarray],
    pairs: Sequence[tuple[np.ndarray, np.ndarray]],
    k: int,
) -> dict:
    """Per-band PSNR/SSIM of two systems against ground truth, plus A - B.

    Returns ``{"a": {band: {"psnr", "ssim"}}, "b": ..., "diff": ...}`` with
    bands ``low`` (corner incl. DC) and ``high``.
    """
    if not pairs:
        raise ValueError("high_frequency_attribution needs at least one pair")
    table = {}
    for key, system in (("a", system_a), ("b", system_b)):
        acc = {band: {"psnr": 0.0, "ssim": 0.0} for band in ("low", "high")}
        for degraded, gt in pairs:
            out = np.asarray(system(degraded), dtype=np.float64)
            o_low, o_high = split_bands(out, k)
            g_low, g_high = split_bands(np.asarray(gt, np.float64), k)
            for band, o, g in (("low", o_low, g_low), ("high", o_high, g_high)):
                acc[band]["psnr"] += psnr(o, g) / len(pairs)
                acc[band]["ssim"] += ssim(o, g) / len(pairs)
        table[key] = acc
    table["diff"] = {
        band: {m: table["a"][band][m] - table["b"][band][m] for m in ("psnr", "ssim")}
        for band in ("low", "high")
    }
    return table


def format_attribution(table: dict, names=("A", "B")) -> str:
    head = f"{'':6}|{names[0]:>9} low {names[0]:>9} high|{names[1]:>9} low {names[1]:>9} high| diff low  diff high"
    rows = [head]
    for m in ("psnr", "ssim"):
        vals = [table[s][b][m] for s in ("a", "b", "diff") for b in ("low", "high")]
        rows.append(f"{m.upper():6}|" + " ".join(f"{v:12.4f}" for v in vals))
    return "\n".join(rows)
