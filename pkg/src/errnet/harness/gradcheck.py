"""Central finite-difference checks of every differentiable operation at 64-bit.

Each check builds a scalar objective ``sum(out * R)`` with a fixed random
projection ``R`` and compares the tape's gradient with central differences,
either element by element (small tensors) or along random directions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import functional as F
from .. import tensor as T
from ..hfr import GRKANLayer, rational_act
from ..lfr import RSSB, VSSM, ScanParams, selective_scan, selective_scan_1d, simple_gate
from ..losses import high_freq_loss, l1_loss, low_freq_loss, ssim_loss, zero_freq_loss
from ..pipeline import ERR, ErrConfig
from ..spectral import dct2, idct2, window_partition
from ..tensor import Tensor, no_grad, parameter
from ..zfe import BBGM, GPTB, aap_unit

PRIMITIVE_TOL = 1e-5
COMPOSITE_TOL = 1e-3


@dataclass
class CheckResult:
    name: str
    rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.rel_err) and self.rel_err < self.tol)


def rel_error(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    den = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / den)


def _fd_error(f, t: Tensor, g: np.ndarray, h: float, rng, max_elementwise: int, directions: int) -> float:
    step = h * max(1.0, float(np.abs(t.data).max()))
    base = t.data.copy()
    flat_base = base.reshape(-1)
    try:
        if t.size <= max_elementwise:
            num = np.zeros(t.size)
            for i in range(t.size):
                for sign in (1, -1):
                    pert = flat_base.copy()
                    pert[i] += sign * step
                    t.data = pert.reshape(base.shape)
                    num[i] += sign * f()
            return rel_error(g, num / (2 * step))
        ana, num = [], []
        for _ in range(directions):
            d = rng.normal(size=t.shape)
            d /= np.linalg.norm(d)
            t.data = base + step * d
            fp = f()
            t.data = base - step * d
            fm = f()
            ana.append(float((g * d).sum()))
            num.append((fp - fm) / (2 * step))
        return rel_error(ana, num)
    finally:
        t.data = base


def check_gradients(
    objective: Callable[[], Tensor],
    tensors: list[Tensor],
    rng: np.random.Generator,
    steps: tuple[float, ...] = (1e-5, 1e-6, 1e-7),
    max_elementwise: int = 64,
    directions: int = 2,
) -> float:
    """Worst relative error over ``tensors`` between tape and central differences.

    Each tensor is scored at the best of ``steps``: large steps suffer from
    truncation and kinks (abs, L1), small ones from cancellation when the
    gradient is tiny next to the objective.
    """
    for t in tensors:
        t.grad = None
    objective().backward()
    analytic = [np.zeros(t.shape) if t.grad is None else t.grad.copy() for t in tensors]

    def f() -> float:
        with no_grad():
            return float(objective().data)

    worst = 0.0
    for t, g in zip(tensors, analytic):
        err = min(_fd_error(f, t, g, h, rng, max_elementwise, directions) for h in steps)
        worst = max(worst, err)
    return worst


def _projected(out_fn, shape_rng: np.random.Generator):
    cache = {}

    def objective():
        out = out_fn()
        if "r" not in cache:
            cache["r"] = shape_rng.normal(size=out.shape)
        return (out * cache["r"]).sum()

    return objective


def _p(rng, *shape, low=-1.0, high=1.0):
    return parameter(rng.uniform(low, high, size=shape))


def _primitive_cases(rng):
    a, b = _p(rng, 3, 4), _p(rng, 3, 4)
    row = _p(rng, 1, 4)
    pos = _p(rng, 3, 4, low=0.5, high=2.0)
    m1, m2 = _p(rng, 4, 5), _p(rng, 5, 3)
    img = _p(rng, 1, 3, 4, 4)
    img8 = _p(rng, 1, 2, 8, 8)
    w_pw, b_pw = _p(rng, 2, 3), _p(rng, 2)
    w_dw, b_dw = _p(rng, 3, 3, 3), _p(rng, 3)
    ln_w, ln_b = _p(rng, 3), _p(rng, 3)
    return [
        ("add(broadcast)", lambda: a + row, [a, row]),
        ("sub", lambda: a - b, [a, b]),
        ("mul", lambda: a * b, [a, b]),
        ("div", lambda: a / pos, [a, pos]),
        ("pow", lambda: pos**1.7, [pos]),
        ("exp", lambda: T.exp(a), [a]),
        ("log", lambda: T.log(pos), [pos]),
        ("sqrt", lambda: T.sqrt(pos), [pos]),
        ("abs", lambda: T.tabs(a), [a]),
        ("tanh", lambda: T.tanh(a), [a]),
        ("sigmoid", lambda: T.sigmoid(a), [a]),
        ("softplus", lambda: T.softplus(a), [a]),
        ("silu", lambda: T.silu(a), [a]),
        ("gelu", lambda: T.gelu(a), [a]),
        ("sum/mean", lambda: T.tsum(a * a, 1, keepdims=True) + T.mean(b, 0), [a, b]),
        ("reshape/transpose", lambda: T.transpose(T.reshape(a, (2, 6)), (1, 0)) * T.reshape(b, (6, 2)), [a, b]),
        ("getitem/flip", lambda: T.flip(a[1:, ::2], 0) * 2.0, [a]),
        ("concat/split", lambda: T.concat(T.split(a, 2, axis=1)[::-1], axis=0), [a]),
        ("matmul", lambda: m1 @ m2, [m1, m2]),
        ("conv2d_pointwise", lambda: F.conv2d_pointwise(img, w_pw, b_pw), [img, w_pw, b_pw]),
        ("conv2d_depthwise", lambda: F.conv2d_depthwise(img, w_dw, b_dw), [img, w_dw, b_dw]),
        ("layernorm", lambda: F.layernorm(img, ln_w, ln_b), [img, ln_w, ln_b]),
        ("softmax", lambda: F.softmax(a, axis=-1), [a]),
        ("avgpool2d", lambda: F.avgpool2d(img8, (2, 4)), [img8]),
        ("bilinear_resize", lambda: F.bilinear_resize(img8, (3, 16)), [img8]),
        ("pad(reflect)", lambda: T.pad2d(img, (1, 2, 0, 3), "reflect"), [img]),
        ("dct2/idct2", lambda: idct2(dct2(img8).coeffs * img8), [img8]),
        ("window_partition", lambda: window_partition(dct2(img8), 4) * 1.5, [img8]),
    ]


def _composite_cases(rng):
    c = 4
    x = _p(rng, 1, c, 8, 8)
    g = _p(rng, 1, c, 8, 8)
    bbgm = BBGM(c, rng)
    gptb = GPTB(c, 2, rng)
    rssb = RSSB(c, 2, rng)
    vssm = VSSM(c, 2, rng)
    gate_in = _p(rng, 1, 2 * c, 4, 4)
    # selective scan pieces, L = 6, d_state = 2
    u = _p(rng, 1, 6, 3)
    scan = ScanParams(3, 2, rng)
    delta = _p(rng, 1, 6, 3, low=0.05, high=0.8)
    a_mat = _p(rng, 3, 2, low=-2.0, high=-0.2)
    bm, cm, dv = _p(rng, 1, 6, 2), _p(rng, 1, 6, 2), _p(rng, 3)
    tokens = _p(rng, 10, 8, low=-2.0, high=2.0)
    num, den = _p(rng, 2, 6, low=-0.5, high=0.5), _p(rng, 2, 4, low=-0.5, high=0.5)
    kan = GRKANLayer(8, 2, rng)
    kan.num.data = kan.num.data + rng.normal(0, 0.05, kan.num.shape)
    kan.den.data = kan.den.data + rng.normal(0, 0.05, kan.den.shape)
    img = _p(rng, 1, 3, 16, 16, low=0.1, high=0.9)
    gt = Tensor(rng.uniform(0.1, 0.9, size=(1, 3, 16, 16)))
    big = _p(rng, 1, c, 16, 16)

    def params(mod):
        return mod.parameters()

    return [
        ("aap_unit", lambda: aap_unit(big), [big]),
        ("simple_gate", lambda: simple_gate(gate_in), [gate_in]),
        ("selective_scan(fused)", lambda: selective_scan(u, delta, a_mat, bm, cm, dv), [u, delta, a_mat, bm, cm, dv]),
        ("selective_scan_1d", lambda: selective_scan_1d(u, scan, "backward"), [u] + params(scan)),
        ("rational_act", lambda: rational_act(tokens, num, den, 2), [tokens, num, den]),
        ("gr_kan_layer", lambda: kan(tokens), [tokens] + params(kan)),
        ("bbgm", lambda: bbgm(g, x), [g, x] + params(bbgm)),
        ("gptb", lambda: gptb(x, g), [x, g] + params(gptb)),
        ("vssm", lambda: vssm(x), [x] + params(vssm)),
        ("rssb", lambda: rssb(x), [x] + params(rssb)),
        ("l1_loss", lambda: l1_loss(img, gt), [img]),
        ("ssim_loss", lambda: ssim_loss(img, gt), [img]),
        ("zero_freq_loss", lambda: zero_freq_loss(img, gt), [img]),
        ("low_freq_loss", lambda: low_freq_loss(img, gt, 4), [img]),
        ("high_freq_loss", lambda: high_freq_loss(img, gt, 4), [img]),
    ]


def tiny_config(seed: int = 0) -> ErrConfig:
    return ErrConfig(
        channels=4, blocks=(1, 1, 1), heads=2, d_state=2, kan_layers=1, window=8,
        kan_groups=2, k=4, patch=32, seed=seed, dtype="float64",
    )


def end_to_end_case(rng, seed: int = 0):
    """Tiny model with randomized output heads so every parameter receives gradient."""
    model = ERR(tiny_config(seed))
    for stage in (model.zfe, model.lfr, model.hfr):
        stage.head.weight.data = rng.normal(0, 0.3, stage.head.weight.shape)
        stage.head.bias.data = rng.normal(0, 0.05, stage.head.bias.shape)
    image = Tensor(rng.uniform(0.05, 0.95, size=(1, 3, 32, 32)))
    gt = Tensor(rng.uniform(0.05, 0.95, size=(1, 3, 32, 32)))

    def objective():
        return model.loss(model(image), gt).total

    return objective, model.parameters()


def run_gradcheck(seed: int = 0, include_end_to_end: bool = True) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for tol, cases in ((PRIMITIVE_TOL, _primitive_cases(rng)), (COMPOSITE_TOL, _composite_cases(rng))):
        for name, fn, tensors in cases:
            obj = _projected(fn, rng)
            results.append(CheckResult(name, check_gradients(obj, tensors, rng), tol))
    if include_end_to_end:
        obj, tensors = end_to_end_case(rng, seed)
        results.append(CheckResult("end_to_end(tiny)", check_gradients(obj, tensors, rng), COMPOSITE_TOL))
    return results


def format_report(results: list[CheckResult]) -> str:
    lines = [f"{'check':28} {'rel_err':>10} {'tol':>8}  status"]
    for r in results:
        lines.append(f"{r.name:28} {r.rel_err:10.2e} {r.tol:8.0e}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
