"""Neural-network primitives on :class:`~errnet.tensor.Tensor` with fused adjoints."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .tensor import ShapeError, Tensor, make_op, separable


def conv2d_pointwise(x: Tensor, w: Tensor, bias: Tensor | None = None) -> Tensor:
    """1x1 convolution: per-pixel channel mixing, ``w`` is [C_out, C_in]."""
    if x.ndim != 4:
        raise ShapeError(f"conv2d_pointwise expects [B,C,H,W], got {x.shape}")
    b, c, h, wd = x.shape
    if w.shape[1] != c:
        raise ShapeError(f"conv2d_pointwise: weight {w.shape} does not take {c} input channels")
    xr = x.data.reshape(b, c, h * wd)
    wd_ = w.data
    out = np.matmul(wd_, xr)
    if bias is not None:
        out = out + bias.data[:, None]
    out = out.reshape(b, w.shape[0], h, wd)

    def bw(g):
        gr = g.reshape(b, w.shape[0], h * wd)
        gx = np.matmul(wd_.T, gr).reshape(x.shape)
        gw = np.tensordot(gr, xr, axes=([0, 2], [0, 2]))
        gb = gr.sum(axis=(0, 2)) if bias is not None else None
        return (gx, gw, gb)

    inputs = (x, w, bias) if bias is not None else (x, w)
    return make_op(out, inputs, bw if bias is not None else (lambda g: bw(g)[:2]), "conv_pw")


def conv2d_depthwise(x: Tensor, w: Tensor, bias: Tensor | None = None) -> Tensor:
    """Per-channel spatial convolution with zero 'same' padding; ``w`` is [C, kh, kw]."""
    if x.ndim != 4:
        raise ShapeError(f"conv2d_depthwise expects [B,C,H,W], got {x.shape}")
    c, kh, kw = w.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d_depthwise needs odd kernel extents, got {kh}x{kw}")
    if x.shape[1] != c:
        raise ShapeError(f"conv2d_depthwise: weight {w.shape} does not match {x.shape[1]} channels")
    _, _, h, wd = x.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    k = w.data
    out = np.zeros_like(x.data)
    for i in range(kh):
        for j in range(kw):
            out += k[None, :, i, j, None, None] * xp[:, :, i : i + h, j : j + wd]
    if bias is not None:
        out += bias.data[None, :, None, None]

    def bw(g):
        gxp = np.zeros_like(xp)
        gw = np.empty_like(k)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i : i + h, j : j + wd] += g * k[None, :, i, j, None, None]
                gw[:, i, j] = np.einsum("bchw,bchw->c", g, xp[:, :, i : i + h, j : j + wd])
        gx = gxp[:, :, ph : ph + h, pw : pw + wd]
        if bias is None:
            return (gx, gw)
        return (gx, gw, g.sum(axis=(0, 2, 3)))

    inputs = (x, w, bias) if bias is not None else (x, w)
    return make_op(out, inputs, bw, "conv_dw")


def layernorm(
    x: Tensor,
    weight: Tensor | None = None,
    bias: Tensor | None = None,
    axis: int = 1,
    eps: float = 1e-6,
) -> Tensor:
    """Normalize over ``axis`` (channels by default), then apply the affine."""
    axis = axis % x.ndim
    if x.shape[axis] == 0:
        raise ShapeError("layernorm over an empty axis")
    bshape = [1] * x.ndim
    bshape[axis] = x.shape[axis]
    xd = x.data
    mu = xd.mean(axis=axis, keepdims=True)
    xc = xd - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=axis, keepdims=True) + eps)
    xhat = xc * inv
    wb = weight.data.reshape(bshape) if weight is not None else None
    out = xhat * wb if wb is not None else xhat.copy()
    if bias is not None:
        out = out + bias.data.reshape(bshape)
    other = tuple(i for i in range(x.ndim) if i != axis)

    def bw(g):
        gh = g * wb if wb is not None else g
        gx = inv * (
            gh - gh.mean(axis=axis, keepdims=True) - xhat * (gh * xhat).mean(axis=axis, keepdims=True)
        )
        grads = [gx]
        if weight is not None:
            grads.append((g * xhat).sum(axis=other).reshape(weight.shape))
        if bias is not None:
            grads.append(g.sum(axis=other).reshape(bias.shape))
        return tuple(grads)

    inputs = [x] + [p for p in (weight, bias) if p is not None]
    return make_op(out, inputs, bw, "layernorm")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return make_op(s, (x,), lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),), "softmax")


# ---------------------------------------------------------------------------
# resampling, expressed as separable constant matrices
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def pool_matrix(n_in: int, n_out: int) -> np.ndarray:
    if n_out <= 0:
        raise ShapeError(f"pool target size must be positive, got {n_out}")
    if n_in % n_out:
        raise ShapeError(f"avgpool: input extent {n_in} not divisible by output extent {n_out}")
    f = n_in // n_out
    m = np.zeros((n_out, n_in))
    for i in range(n_out):
        m[i, i * f : (i + 1) * f] = 1.0 / f
    m.setflags(write=False)
    return m


@lru_cache(maxsize=None)
def bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Linear interpolation weights, align-corners=False (half-pixel centres)."""
    if n_out <= 0 or n_in <= 0:
        raise ShapeError(f"resize sizes must be positive, got {n_in}->{n_out}")
    m = np.zeros((n_out, n_in))
    ratio = n_in / n_out
    for i in range(n_out):
        src = max((i + 0.5) * ratio - 0.5, 0.0)
        i0 = min(int(np.floor(src)), n_in - 1)
        i1 = min(i0 + 1, n_in - 1)
        lam = src - i0
        m[i, i0] += 1.0 - lam
        m[i, i1] += lam
    m.setflags(write=False)
    return m


def avgpool2d(x: Tensor, out_size: tuple[int, int]) -> Tensor:
    oh, ow = out_size
    h, w = x.shape[-2:]
    return separable(x, pool_matrix(h, oh), pool_matrix(w, ow))


def bilinear_resize(x: Tensor, size: tuple[int, int]) -> Tensor:
    oh, ow = size
    h, w = x.shape[-2:]
    if (oh, ow) == (h, w):
        return x
    return separable(x, bilinear_matrix(h, oh), bilinear_matrix(w, ow))
