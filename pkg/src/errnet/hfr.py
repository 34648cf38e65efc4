"""Stage 3: high-frequency refiner at full resolution.

The embedded feature is transformed with the DCT, cut into non-overlapping
w x w spectral windows, and every window position is treated as a token
with C channels. A stack of group-rational KAN layers acts on those tokens
before window reversal and the inverse DCT.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import functional as F
from .module import Embed, LayerNorm, Module, Pointwise
from .spectral import dct2, idct2, window_partition, window_reverse
from .tensor import ShapeError, Tensor, make_op, matmul, pad2d, parameter, reshape, transpose

# Safe Pade [5/4] fit of tanh-GELU, weighted on [-4, 4] with a tail on
# [-60, 60] so spectral coefficients far from the origin stay near-linear.
# Regenerate with fit_gelu_rational().
GELU_NUM = (
    1.84808475e-02,
    4.99997605e-01,
    3.54545781e-01,
    7.09914439e-02,
    3.10324935e-03,
    3.58695578e-05,
)
GELU_DEN = (-6.80388852e-06, 1.41984833e-01, -1.00938183e-07, 7.17403961e-05)


def fit_gelu_rational(m: int = 5, n: int = 4) -> tuple[np.ndarray, np.ndarray]:
    from scipy.optimize import least_squares

    x = np.concatenate([np.linspace(-4, 4, 801), np.linspace(-60, 60, 241)])
    weight = np.where(np.abs(x) <= 4, 1.0, 0.1)
    target = 0.5 * x * (1 + np.tanh(np.sqrt(2 / np.pi) * (x + 0.044715 * x**3)))

    def resid(p):
        num = np.polyval(p[: m + 1][::-1], x)
        den = 1 + np.abs(np.polyval(np.concatenate([p[m + 1 :][::-1], [0.0]]), x))
        return (num / den - target) * weight

    p0 = np.zeros(m + 1 + n)
    p0[1], p0[2], p0[4] = 0.5, 0.3, 0.02
    p0[m + 2], p0[m + 4] = 0.05, 0.02
    p = least_squares(resid, p0).x
    return p[: m + 1], p[m + 1 :]


def _rational_parts(x: np.ndarray, num: np.ndarray, den: np.ndarray):
    """P, P', S, S' by Horner; ``num``/``den`` broadcast against ``x`` on the leading axis."""
    p = np.zeros_like(x)
    dp = np.zeros_like(x)
    for i in range(num.shape[0] - 1, -1, -1):
        dp = dp * x + p
        p = p * x + num[i]
    s = np.zeros_like(x)
    ds = np.zeros_like(x)
    for j in range(den.shape[0] - 1, -1, -1):
        ds = ds * x + s
        s = s * x + den[j]
    # S(x) = x * (b1 + b2 x + ...), S' = (b1 + ...) + x * (...)'
    ds = s + x * ds
    s = s * x
    return p, dp, s, ds


def rational_act(x: Tensor, num: Tensor, den: Tensor, groups: int) -> Tensor:
    """y = P(x) / (1 + |S(x)|) on the last (channel) axis, coefficients shared per group.

    ``num`` is [groups, m + 1] (a0..am), ``den`` is [groups, n] (b1..bn).
    """
    c = x.shape[-1]
    if c % groups:
        raise ShapeError(f"{groups} groups do not divide {c} channels")
    per = c // groups
    xd = x.data
    # coefficient axis first so Horner broadcasts over [..., C]
    num_c = np.repeat(num.data, per, axis=0).T.astype(xd.dtype)  # [m+1, C]
    den_c = np.repeat(den.data, per, axis=0).T.astype(xd.dtype)  # [n, C]
    p, dp, s, ds = _rational_parts(xd, num_c, den_c)
    q = 1.0 + np.abs(s)
    sgn = np.sign(s)
    y = p / q

    def bw(g):
        # every factor is divided by q before multiplying so nothing grows like q^2
        gq = g / q
        gx = gq * (dp - y * sgn * ds)
        lead = tuple(range(xd.ndim - 1))
        pows = np.ones_like(xd)
        g_num = []
        for _ in range(num.shape[1]):
            g_num.append((gq * pows).sum(axis=lead))
            pows = pows * xd
        gs = -gq * y * sgn
        pows = xd.copy()
        g_den = []
        for _ in range(den.shape[1]):
            g_den.append((gs * pows).sum(axis=lead))
            pows = pows * xd
        g_num = np.stack(g_num, axis=1).reshape(groups, per, -1).sum(axis=1)
        g_den = np.stack(g_den, axis=1).reshape(groups, per, -1).sum(axis=1)
        return gx, g_num, g_den

    return make_op(y, (x, num, den), bw, "rational")


@lru_cache(maxsize=None)
def _second_moment(num: tuple, den: tuple, order: int = 80) -> float:
    """E[phi(x)^2] for x ~ N(0, 1) by Gauss-Hermite quadrature."""
    nodes, weights = np.polynomial.hermite_e.hermegauss(order)
    p, _, s, _ = _rational_parts(nodes, np.asarray(num), np.asarray(den))
    phi = p / (1 + np.abs(s))
    return float((weights * phi**2).sum() / np.sqrt(2 * np.pi))


class GRKANLayer(Module):
    """Group-rational activation followed by channel mixing (no bias by default).

    Mixing weights are drawn with variance ``1 / (C_in * E[phi(x)^2])`` so a
    unit-variance input gives a unit-variance output at initialization.
    """

    def __init__(
        self,
        channels: int,
        groups: int,
        rng: np.random.Generator,
        m: int = 5,
        n: int = 4,
        bias: bool = False,
    ):
        if channels % groups:
            raise ShapeError(f"{groups} groups do not divide {channels} channels")
        self.groups = groups
        num = np.zeros(m + 1)
        den = np.zeros(n)
        num[: min(m + 1, len(GELU_NUM))] = GELU_NUM[: m + 1]
        den[: min(n, len(GELU_DEN))] = GELU_DEN[:n]
        self.num = parameter(np.tile(num, (groups, 1)))
        self.den = parameter(np.tile(den, (groups, 1)))
        var = 1.0 / (channels * _second_moment(tuple(num), tuple(den)))
        self.weight = parameter(rng.normal(0.0, np.sqrt(var), size=(channels, channels)))
        self.bias = parameter(np.zeros(channels)) if bias else None

    def forward(self, tokens: Tensor) -> Tensor:
        y = matmul(rational_act(tokens, self.num, self.den, self.groups), transpose(self.weight))
        return y + self.bias if self.bias is not None else y


class FWKAN(Module):
    """Pre-norm residual stack of GR-KAN layers on window tokens [N, w*w, C].

    Spectral tokens span several orders of magnitude (the DC term scales with
    sqrt(HW)), so each layer sees a per-token layer-normalized copy; a trained
    rational can grow like x^(m-n+1) and would otherwise overflow in float32.
    """

    def __init__(self, channels: int, n_layers: int, groups: int, rng: np.random.Generator, m: int = 5, n: int = 4):
        self.norms = [LayerNorm(channels, axis=-1) for _ in range(n_layers)]
        self.layers = [GRKANLayer(channels, groups, rng, m, n) for _ in range(n_layers)]

    def forward(self, tokens: Tensor) -> Tensor:
        for norm, layer in zip(self.norms, self.layers):
            tokens = tokens + layer(norm(tokens))
        return tokens


def _window_pad(h: int, w: int, win: int) -> tuple[int, int, int, int]:
    return (0, (-h) % win, 0, (-w) % win)


def spectral_window_path(x: Tensor, fn, win: int) -> Tensor:
    """IDCT(WR(fn(WP(DCT(x))))) with reflect padding to window multiples and a crop back.

    ``fn`` maps window tokens [N, w*w, C] to the same shape.
    """
    b, c, h, w = x.shape
    pad = _window_pad(h, w, win)
    xp = pad2d(x, pad, mode="reflect")
    hp, wp = xp.shape[-2:]
    windows = window_partition(dct2(xp), win)  # [N, C, w, w]
    n = windows.shape[0]
    tokens = transpose(reshape(windows, (n, c, win * win)), (0, 2, 1))
    tokens = fn(tokens)
    windows = reshape(transpose(tokens, (0, 2, 1)), (n, c, win, win))
    out = idct2(window_reverse(windows, win, hp, wp))
    if pad[1] or pad[3]:
        out = out[:, :, :h, :w]
    return out


class HFR(Module):
    def __init__(
        self,
        channels: int,
        n_layers: int,
        groups: int,
        window: int,
        rng: np.random.Generator,
        m: int = 5,
        n: int = 4,
    ):
        self.window = window
        self.embed = Embed(3, channels, rng)
        self.fwkan = FWKAN(channels, n_layers, groups, rng, m, n)
        self.head = Pointwise(channels, 3, rng, zero=True)

    def refine(self, x_high: Tensor) -> Tensor:
        return spectral_window_path(x_high, self.fwkan, self.window)

    def forward(self, image: Tensor, feat_prev: Tensor | None, base: Tensor) -> Tensor:
        h, w = image.shape[-2:]
        x = self.embed(image)
        if feat_prev is not None:
            x = x + F.bilinear_resize(feat_prev, (h, w))
        return base + self.head(self.refine(x))


def kan_param_count(channels: int, layers: int, groups: int, m: int = 5, n: int = 4, norm: bool = True) -> int:
    """FW-KAN parameters: per layer C x C mixing, g (m + 1 + n) coefficients and, with ``norm``, 2C."""
    per_layer = channels * channels + groups * (m + 1 + n) + (2 * channels if norm else 0)
    return layers * per_layer


def mlp_param_count(channels: int, depth: int) -> int:
    """``depth`` units of linear-ReLU-linear-ReLU-linear, all C -> C with bias."""
    return depth * 3 * (channels * channels + channels)


def param_count_comparison(config, depth: int | None = None) -> tuple[int, int]:
    """(FW-KAN, MLP) parameter counts at the config's width and a shared depth.

    ``depth`` defaults to the config's KAN depth; both stacks use it.
    """
    depth = config.kan_layers if depth is None else depth
    kan = kan_param_count(config.channels, depth, config.kan_groups, config.kan_m, config.kan_n)
    return kan, mlp_param_count(config.channels, depth)
