import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import analytic_grads, numeric_grad, rel_err
from errnet.losses import (
    StageBundle,
    band_l1,
    high_freq_loss,
    l1_loss,
    low_freq_loss,
    spectral_diff,
    ssim_loss,
    total_loss,
    zero_freq_loss,
)
from errnet.spectral import BandSpec, dct_matrix, idct2_array
from errnet.tensor import ShapeError, Tensor, parameter


def _pair(seed, shape=(2, 3, 16, 16)):
    rng = np.random.default_rng(seed)
    return Tensor(rng.random(shape)), Tensor(rng.random(shape))


def test_identity_all_zero():
    a, _ = _pair(0)
    assert l1_loss(a, a).item() == 0.0
    assert ssim_loss(a, a).item() == pytest.approx(0.0, abs=1e-12)
    assert zero_freq_loss(a, a).item() == 0.0
    assert low_freq_loss(a, a, 4).item() == 0.0 and high_freq_loss(a, a, 4).item() == 0.0


def test_l1_constant_offset():
    a, _ = _pair(1)
    assert l1_loss(Tensor(a.data + 0.1), a).item() == pytest.approx(0.1, abs=1e-12)


def test_ssim_loss_noise_range():
    a, b = _pair(2, (1, 3, 32, 32))
    assert 0.8 <= ssim_loss(a, b).item() <= 1.05


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        l1_loss(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((1, 3, 4, 8))))


def test_zero_freq_closed_form():
    h, w, delta = 8, 12, 0.03
    gt = np.random.default_rng(3).random((1, 3, h, w))
    loss = zero_freq_loss(Tensor(gt + delta), Tensor(gt)).item()
    assert loss == pytest.approx(np.sqrt(h * w) * delta, abs=1e-12)
    # brute-force DC: sum of x * cos(0) * cos(0) * a(0)^2
    dc = lambda x: x.sum(axis=(-2, -1)) * dct_matrix(h)[0, 0] * dct_matrix(w)[0, 0]
    assert loss == pytest.approx(np.abs(dc(gt + delta) - dc(gt)).mean(), abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_zero_freq_ignores_zero_mean_noise(seed):
    rng = np.random.default_rng(seed)
    out = rng.random((1, 3, 8, 8))
    noise = rng.normal(size=out.shape)
    noise -= noise.mean(axis=(-2, -1), keepdims=True)
    gt = Tensor(rng.random(out.shape))
    a = zero_freq_loss(Tensor(out), gt).item()
    b = zero_freq_loss(Tensor(out + noise), gt).item()
    assert abs(a - b) < 1e-10


@pytest.mark.parametrize("k", [1, 4, 8, 16])
def test_band_decomposition_identity(k):
    for seed in range(5):
        out, gt = _pair(seed)
        n = BandSpec(k, 16, 16).sizes()
        combined = n["zero"] * zero_freq_loss(out, gt) + n["low"] * low_freq_loss(out, gt, k) + n["high"] * high_freq_loss(out, gt, k)
        b, c = out.shape[:2]
        full = np.abs(spectral_diff(out, gt).data).sum() / (b * c)
        assert abs(combined.item() - full) < 1e-10


def test_single_high_coefficient():
    k = 4
    spec = np.zeros((1, 1, 16, 16))
    spec[..., k, 0] = 1.0
    gt = np.random.default_rng(5).random((1, 1, 16, 16))
    out = Tensor(gt + idct2_array(spec))
    assert zero_freq_loss(out, Tensor(gt)).item() < 1e-12
    assert low_freq_loss(out, Tensor(gt), k).item() < 1e-12
    assert high_freq_loss(out, Tensor(gt), k).item() == pytest.approx(1.0 / (256 - 16), rel=1e-9)


def test_cutoff_out_of_range():
    a, b = _pair(6)
    with pytest.raises(ValueError):
        low_freq_loss(a, b, 0)
    with pytest.raises(ValueError):
        high_freq_loss(a, b, 17)


def test_empty_high_band_is_zero():
    a, b = _pair(7)
    assert band_l1(a, b, "high", 16).item() == 0.0


def test_ssim_loss_symmetric():
    a, b = _pair(8)
    assert abs(ssim_loss(a, b).item() - ssim_loss(b, a).item()) < 1e-12


def test_total_loss_identity_and_sum():
    a, gt = _pair(9)
    zero = total_loss(StageBundle(gt, gt, gt), gt, 4)
    assert zero.total.item() == pytest.approx(0.0, abs=1e-12)
    r = total_loss(StageBundle(a, Tensor(a.data * 0.9), Tensor(a.data * 0.8)), gt, 4)
    parts = r.components()
    acc = parts[0]
    for p in parts[1:]:
        acc = acc + p
    assert acc.item() == r.total.item()
    assert all(p.item() >= 0 for p in parts)
    assert set(r.as_dict()) == {"l1_s1", "l1_s2", "l1_s3", "ssim_s1", "ssim_s2", "ssim_s3", "lzf", "llf", "lhf", "total"}


def test_total_loss_ties_bands_to_stages():
    a, gt = _pair(10)
    r = total_loss(StageBundle(a, gt, gt), gt, 4)
    assert r.lzf.item() > 0 and r.llf.item() == 0 and r.lhf.item() == 0
    r = total_loss(StageBundle(gt, gt, a), gt, 4)
    assert r.lzf.item() == 0 and r.llf.item() == 0 and r.lhf.item() > 0


def test_total_loss_missing_stage():
    a, gt = _pair(11)
    with pytest.raises(ValueError):
        total_loss(StageBundle(a, a, None), gt, 4)


def test_toggles_zero_terms():
    a, gt = _pair(12)
    r = total_loss(StageBundle(a, a, a), gt, 4, use_zf=False, use_lf=False, use_hf=False)
    assert r.lzf.item() == r.llf.item() == r.lhf.item() == 0.0


@pytest.mark.parametrize("name", ["l1", "ssim", "zf", "lf", "hf"])
def test_loss_grads(name):
    rng = np.random.default_rng(13)
    x = parameter(rng.uniform(0.1, 0.9, size=(1, 2, 12, 12)))
    gt = Tensor(rng.uniform(0.1, 0.9, size=(1, 2, 12, 12)))
    fn = {
        "l1": lambda: l1_loss(x, gt),
        "ssim": lambda: ssim_loss(x, gt),
        "zf": lambda: zero_freq_loss(x, gt),
        "lf": lambda: low_freq_loss(x, gt, 4),
        "hf": lambda: high_freq_loss(x, gt, 4),
    }[name]
    (g,) = analytic_grads(fn, [x])
    assert rel_err(g, numeric_grad(fn, x)) < 1e-5
