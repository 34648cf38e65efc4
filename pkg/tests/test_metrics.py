import numpy as np
import pytest

from errnet.metrics import PSNR_CAP, psnr, ssim
from errnet.tensor import ShapeError


def ref_psnr(a, b):
    mse = np.mean((a - b) ** 2)
    return PSNR_CAP if mse == 0 else min(PSNR_CAP, -10 * np.log10(mse))


def ref_ssim(a, b, size=11, sigma=1.5):
    """Sliding-window SSIM by explicit window loops (valid positions only)."""
    r = np.arange(size) - size // 2
    g = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2 * sigma**2))
    g /= g.sum()
    c1, c2 = 0.01**2, 0.03**2
    scores = []
    for ca, cb in zip(a.reshape(-1, *a.shape[-2:]), b.reshape(-1, *b.shape[-2:])):
        h, w = ca.shape
        for i in range(h - size + 1):
            for j in range(w - size + 1):
                pa, pb = ca[i : i + size, j : j + size], cb[i : i + size, j : j + size]
                ma, mb = (g * pa).sum(), (g * pb).sum()
                va = (g * pa * pa).sum() - ma**2
                vb = (g * pb * pb).sum() - mb**2
                cov = (g * pa * pb).sum() - ma * mb
                scores.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return float(np.mean(scores))


def test_identity_caps():
    x = np.random.default_rng(0).random((3, 16, 16))
    assert psnr(x, x) == PSNR_CAP
    assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)


def test_constant_offset_psnr():
    a = np.zeros((3, 8, 8))
    assert psnr(a, a + 16 / 255) == pytest.approx(10 * np.log10(255**2 / 256), abs=1e-9)
    assert psnr(a, a + 16 / 255) == pytest.approx(24.05, abs=5e-3)


def test_against_reference_on_random_pairs():
    rng = np.random.default_rng(42)
    for _ in range(20):
        a = rng.random((2, 16, 14))
        b = np.clip(a + rng.normal(0, rng.uniform(0.01, 0.3), a.shape), 0, 1)
        assert abs(psnr(a, b) - ref_psnr(a, b)) < 1e-9
        assert abs(ssim(a, b) - ref_ssim(a, b)) < 1e-6


def test_checkerboard_inverse_strongly_negative():
    yy, xx = np.mgrid[0:16, 0:16]
    a = ((yy + xx) % 2).astype(float)[None]
    s = ssim(a, 1 - a)
    assert s == pytest.approx(ref_ssim(a, 1 - a), abs=1e-6)
    assert s < -0.9


def test_noise_pair_near_zero():
    rng = np.random.default_rng(1)
    a, b = rng.random((2, 3, 32, 32))
    assert 0.8 <= 1 - ssim(a, b) <= 1.05


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        psnr(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))
    with pytest.raises(ShapeError):
        ssim(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))


def test_ssim_symmetric():
    rng = np.random.default_rng(3)
    a, b = rng.random((2, 3, 20, 20))
    assert abs(ssim(a, b) - ssim(b, a)) < 1e-12


def test_small_images_shrink_window():
    rng = np.random.default_rng(4)
    a, b = rng.random((2, 1, 7, 7))
    assert ssim(a, b) == pytest.approx(ref_ssim(a, b, size=7), abs=1e-9)
