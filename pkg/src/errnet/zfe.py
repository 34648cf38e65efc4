"""Stage 1: zero-frequency enhancer at 1/8 resolution.

A global prior pooled from the full-resolution embedding modulates the
queries, keys and values of channel-wise transformer blocks.
"""

from __future__ import annotations

import numpy as np

from . import functional as F
from .module import Embed, LayerNorm, Module, Pointwise
from .tensor import ShapeError, Tensor, concat, gelu, matmul, reshape, scale, split, transpose

DOWN = 8


def aap_unit(x: Tensor) -> Tensor:
    """Global prior ``g * l + g`` with g the (1,1) pool and l the (H/8, W/8) pool."""
    h, w = x.shape[-2:]
    if h % DOWN or w % DOWN:
        raise ShapeError(f"aap_unit needs extents divisible by {DOWN}, got {h}x{w}")
    g = F.avgpool2d(x, (1, 1))
    local = F.avgpool2d(x, (h // DOWN, w // DOWN))
    return g * local + g


class BBGM(Module):
    """Bi-branch gated modulation of a feature ``f`` by the prior ``g``.

    Fusion ``conv(conv(g) * conv(f))`` yields two gates after GELU; only the
    first is used by both branches, and a pointwise projection maps the
    concatenated 2C branches back to C.
    """

    def __init__(self, channels: int, rng: np.random.Generator):
        c = channels
        self.conv_g = Pointwise(c, c, rng)
        self.conv_f = Pointwise(c, c, rng)
        self.conv_fuse = Pointwise(c, 2 * c, rng)
        self.proj = Pointwise(2 * c, c, rng)

    def gates(self, g: Tensor, f: Tensor) -> tuple[Tensor, Tensor]:
        fused = self.conv_fuse(self.conv_g(g) * self.conv_f(f))
        wa, wb = split(gelu(fused), 2, axis=1)
        return wa, wb

    def forward(self, g: Tensor, f: Tensor) -> Tensor:
        if g.shape != f.shape:
            raise ShapeError(f"bbgm: prior {g.shape} and feature {f.shape} differ")
        wa, _wb = self.gates(g, f)
        return self.proj(concat([f + wa * g, g + wa * f], axis=1))


def channel_attention(q: Tensor, k: Tensor, v: Tensor, heads: int) -> tuple[Tensor, Tensor]:
    """Transposed attention: a (C/h x C/h) map per head over flattened pixels."""
    b, c, h, w = q.shape
    if c % heads:
        raise ShapeError(f"{heads} heads do not divide {c} channels")
    d = c // heads
    shape = (b, heads, d, h * w)
    q, k, v = (reshape(t, shape) for t in (q, k, v))
    logits = scale(matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(d))
    attn = F.softmax(logits, axis=-1)
    out = reshape(matmul(attn, v), (b, c, h, w))
    return out, attn


class GPTB(Module):
    def __init__(self, channels: int, heads: int, rng: np.random.Generator, ffn_expansion: int = 2):
        if channels % heads:
            raise ShapeError(f"{heads} heads do not divide {channels} channels")
        c = channels
        self.heads = heads
        self.norm1 = LayerNorm(c)
        self.qkv = Pointwise(c, 3 * c, rng)
        self.bbgm = BBGM(c, rng)
        self.attn_out = Pointwise(c, c, rng)
        self.norm2 = LayerNorm(c)
        self.ffn_in = Pointwise(c, ffn_expansion * c, rng)
        self.ffn_out = Pointwise(ffn_expansion * c, c, rng)

    def forward(self, x: Tensor, g: Tensor) -> Tensor:
        q, k, v = split(self.qkv(self.norm1(x)), 3, axis=1)
        q, k, v = self.bbgm(g, q), self.bbgm(g, k), self.bbgm(g, v)
        attended, _ = channel_attention(q, k, v, self.heads)
        x = self.attn_out(attended) + x
        return self.ffn_out(gelu(self.ffn_in(self.norm2(x)))) + x


class ZFE(Module):
    def __init__(self, channels: int, n_blocks: int, heads: int, rng: np.random.Generator):
        self.embed = Embed(3, channels, rng)
        self.blocks = [GPTB(channels, heads, rng) for _ in range(n_blocks)]
        self.head = Pointwise(channels, 3, rng, zero=True)

    def forward(self, image: Tensor) -> tuple[Tensor, Tensor]:
        h, w = image.shape[-2:]
        if h % DOWN or w % DOWN:
            raise ShapeError(f"stage 1 needs extents divisible by {DOWN}, got {h}x{w}")
        x = self.embed(image)
        prior = aap_unit(x)
        feat = F.bilinear_resize(x, (h // DOWN, w // DOWN))
        for block in self.blocks:
            feat = block(feat, prior)
        out = image + F.bilinear_resize(self.head(feat), (h, w))
        return out, feat
