"""Stage 2: low-frequency restorer at 1/4 resolution.

Residue state-space blocks built around a four-direction selective scan.
The scan is an S6-style input-dependent recurrence

    h_t = exp(delta_t * A) * h_{t-1} + delta_t * B(u_t) * u_t
    y_t = C(u_t) . h_t + D * u_t

run as a fused primitive: the time loop is sequential, batch, channels and
state are vectorized.
"""

from __future__ import annotations

import numpy as np

from . import functional as F
from .module import Depthwise, Embed, LayerNorm, Module, Pointwise, uniform_init
from .tensor import (
    ShapeError,
    Tensor,
    flip,
    gelu,
    make_op,
    matmul,
    parameter,
    reshape,
    silu,
    softplus,
    split,
    transpose,
)

DOWN = 4


def simple_gate(x: Tensor) -> Tensor:
    if x.shape[1] % 2:
        raise ShapeError(f"simple_gate needs an even channel count, got {x.shape[1]}")
    f1, f2 = split(x, 2, axis=1)
    return gelu(f1) * f2


def selective_scan(u: Tensor, delta: Tensor, a: Tensor, b: Tensor, c: Tensor, d: Tensor) -> Tensor:
    """Fused recurrence. u, delta: [B, L, C]; a: [C, N] (negative); b, c: [B, L, N]; d: [C]."""
    ud, dd, ad, bd, cd, Dd = u.data, delta.data, a.data, b.data, c.data, d.data
    nb, length, ch = ud.shape
    n = ad.shape[1]
    decay = np.exp(dd[..., None] * ad)  # [B, L, C, N]
    drive = (dd * ud)[..., None] * bd[:, :, None, :]  # [B, L, C, N]
    hs = np.empty((nb, length, ch, n), dtype=ud.dtype)
    h = np.zeros((nb, ch, n), dtype=ud.dtype)
    for t in range(length):
        h = decay[:, t] * h + drive[:, t]
        hs[:, t] = h
    y = np.einsum("blcn,bln->blc", hs, cd) + ud * Dd

    def bw(gy):
        gc = np.einsum("blc,blcn->bln", gy, hs)
        gh_direct = gy[..., None] * cd[:, :, None, :]
        gh = np.empty_like(hs)
        acc = np.zeros((nb, ch, n), dtype=ud.dtype)
        for t in range(length - 1, -1, -1):
            acc = gh_direct[:, t] + acc
            gh[:, t] = acc
            acc = acc * decay[:, t]
        h_prev = np.concatenate([np.zeros_like(hs[:, :1]), hs[:, :-1]], axis=1)
        g_decay = gh * h_prev * decay  # d/d(delta*A) of the decay term
        g_delta = np.einsum("blcn,cn->blc", g_decay, ad)
        ga = np.einsum("blcn,blc->cn", g_decay, dd)
        gdrive = gh * bd[:, :, None, :]  # d/d(delta*u)
        gdu = gdrive.sum(axis=-1)
        g_delta += gdu * ud
        gu = gdu * dd + gy * Dd
        gb = np.einsum("blcn,blc->bln", gh, dd * ud)
        gd = np.einsum("blc,blc->c", gy, ud)
        return gu, g_delta, ga, gb, gc, gd

    return make_op(y, (u, delta, a, b, c, d), bw, "selective_scan")


class ScanParams(Module):
    """Input-dependent projections and state matrix of one scan direction."""

    def __init__(self, channels: int, d_state: int, rng: np.random.Generator):
        c, n = channels, d_state
        self.w_delta = parameter(uniform_init(rng, (c, c), c) * 0.1)
        dt = np.exp(rng.uniform(np.log(1e-3), np.log(1e-1), size=c))
        self.b_delta = parameter(dt + np.log(-np.expm1(-dt)))  # softplus^-1
        self.w_b = parameter(uniform_init(rng, (n, c), c))
        self.w_c = parameter(uniform_init(rng, (n, c), c))
        self.a_log = parameter(np.log(np.tile(np.arange(1, n + 1, dtype=np.float64), (c, 1))))
        self.d = parameter(np.ones(c))


def selective_scan_1d(u: Tensor, params: ScanParams, direction: str = "forward") -> Tensor:
    """Scan a sequence [L, C] or [B, L, C]; ``direction='backward'`` runs from the end."""
    squeeze = u.ndim == 2
    if squeeze:
        u = reshape(u, (1,) + u.shape)
    if direction == "backward":
        u = flip(u, 1)
    elif direction != "forward":
        raise ValueError(f"unknown scan direction {direction!r}")
    delta = softplus(matmul(u, transpose(params.w_delta)) + params.b_delta)
    b = matmul(u, transpose(params.w_b))
    c = matmul(u, transpose(params.w_c))
    a = -params.a_log.exp()
    y = selective_scan(u, delta, a, b, c, params.d)
    if direction == "backward":
        y = flip(y, 1)
    return reshape(y, y.shape[1:]) if squeeze else y


class VSSM(Module):
    """Projection, depthwise conv + SiLU, four directional scans summed, gated output.

    Scan order: row-major forward, row-major backward, column-major forward,
    column-major backward.
    """

    def __init__(self, channels: int, d_state: int, rng: np.random.Generator, expand: int = 1):
        ci = expand * channels
        self.in_proj = Pointwise(channels, 2 * ci, rng, bias=False)
        self.dw = Depthwise(ci, rng, bias=False)
        self.scans = [ScanParams(ci, d_state, rng) for _ in range(4)]
        self.out_norm = LayerNorm(ci)
        self.out_proj = Pointwise(ci, channels, rng, bias=False)

    def forward(self, x: Tensor) -> Tensor:
        xs, z = split(self.in_proj(x), 2, axis=1)
        xs = silu(self.dw(xs))
        b, c, h, w = xs.shape
        rows = reshape(transpose(xs, (0, 2, 3, 1)), (b, h * w, c))
        cols = reshape(transpose(xs, (0, 3, 2, 1)), (b, w * h, c))
        y_rows = selective_scan_1d(rows, self.scans[0]) + selective_scan_1d(rows, self.scans[1], "backward")
        y_cols = selective_scan_1d(cols, self.scans[2]) + selective_scan_1d(cols, self.scans[3], "backward")
        y = transpose(reshape(y_rows, (b, h, w, c)), (0, 3, 1, 2)) + transpose(
            reshape(y_cols, (b, w, h, c)), (0, 3, 2, 1)
        )
        return self.out_proj(self.out_norm(y) * silu(z))


class RSSB(Module):
    def __init__(self, channels: int, d_state: int, rng: np.random.Generator):
        c = channels
        self.norm1 = LayerNorm(c)
        self.vssm = VSSM(c, d_state, rng)
        self.s = parameter(np.ones((c, 1, 1)))
        self.norm2 = LayerNorm(c)
        self.pc_in = Pointwise(c, 2 * c, rng)
        self.dc = Depthwise(2 * c, rng)
        self.s2 = parameter(np.ones((c, 1, 1)))
        self.pc_out = Pointwise(c, c, rng)
        self.pc_out.weight.data = np.eye(c)

    def forward(self, x: Tensor) -> Tensor:
        x1 = self.vssm(self.norm1(x)) + self.s * x
        gated = simple_gate(self.dc(self.pc_in(self.norm2(x1))))
        return self.pc_out(gated + self.s2 * x1)


class LFR(Module):
    def __init__(self, channels: int, n_blocks: int, d_state: int, rng: np.random.Generator):
        self.embed = Embed(3, channels, rng)
        self.blocks = [RSSB(channels, d_state, rng) for _ in range(n_blocks)]
        self.head = Pointwise(channels, 3, rng, zero=True)

    def forward(self, image: Tensor, feat_prev: Tensor | None, base: Tensor) -> tuple[Tensor, Tensor]:
        """``feat_prev`` is the stage-1 feature (None disables it); ``base`` the image residual."""
        h, w = image.shape[-2:]
        if h % DOWN or w % DOWN:
            raise ShapeError(f"stage 2 needs extents divisible by {DOWN}, got {h}x{w}")
        size = (h // DOWN, w // DOWN)
        x = F.bilinear_resize(self.embed(image), size)
        if feat_prev is not None:
            x = x + F.bilinear_resize(feat_prev, size)
        for block in self.blocks:
            x = block(x)
        out = base + F.bilinear_resize(self.head(x), (h, w))
        return out, x
