"""PSNR and SSIM on [0, 1] images.

SSIM follows the Wang et al. reference: 11x11 Gaussian window (sigma 1.5),
'valid' filtering, C1 = 0.01**2, C2 = 0.03**2, computed per channel and
averaged. The tensor version is differentiable and backs both the loss
and the evaluation metric.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .tensor import ShapeError, Tensor, no_grad, separable

PSNR_CAP = 99.0
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def _array(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def psnr(a, b, cap: float = PSNR_CAP) -> float:
    a, b = _array(a), _array(b)
    if a.shape != b.shape:
        raise ShapeError(f"psnr: shapes {a.shape} and {b.shape} differ")
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse <= 0.0:
        return cap
    return float(min(cap, 10.0 * np.log10(1.0 / mse)))


@lru_cache(maxsize=None)
def gaussian_valid_matrix(n: int, size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """Rows are the Gaussian taps of every 'valid' window position along an axis.

    Axes shorter than the window use the largest odd window that fits.
    """
    size = min(size, n if n % 2 else n - 1)
    size = max(size, 1)
    r = np.arange(size) - (size - 1) / 2
    taps = np.exp(-(r**2) / (2 * sigma**2))
    taps /= taps.sum()
    m = np.zeros((n - size + 1, n))
    for i in range(n - size + 1):
        m[i, i : i + size] = taps
    m.setflags(write=False)
    return m


def ssim_tensor(a: Tensor, b: Tensor) -> Tensor:
    """Mean SSIM over batch, channels and window positions (differentiable)."""
    if a.shape != b.shape:
        raise ShapeError(f"ssim: shapes {a.shape} and {b.shape} differ")
    h, w = a.shape[-2:]
    gh, gw = gaussian_valid_matrix(h), gaussian_valid_matrix(w)

    def filt(t):
        return separable(t, gh, gw)

    mu_a, mu_b = filt(a), filt(b)
    mu_aa, mu_bb, mu_ab = mu_a * mu_a, mu_b * mu_b, mu_a * mu_b
    s_aa = filt(a * a) - mu_aa
    s_bb = filt(b * b) - mu_bb
    s_ab = filt(a * b) - mu_ab
    num = (2.0 * mu_ab + SSIM_C1) * (2.0 * s_ab + SSIM_C2)
    den = (mu_aa + mu_bb + SSIM_C1) * (s_aa + s_bb + SSIM_C2)
    return (num / den).mean()


def ssim(a, b) -> float:
    a, b = _array(a), _array(b)
    with no_grad():
        return ssim_tensor(Tensor(a.astype(np.float64)), Tensor(b.astype(np.float64))).item()
