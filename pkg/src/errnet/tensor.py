"""Dense tensor with define-by-run reverse-mode automatic differentiation.

Every operation that touches a tensor with ``requires_grad`` records a
:class:`Node` carrying a global sequence number. ``backward`` gathers the
ancestors of the loss into a :class:`Tape` sorted by that number and
replays the adjoints in exact reverse execution order.
"""

from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

_seq = itertools.count()
_state = threading.local()


class ShapeError(ValueError):
    pass


def is_grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference, finite differences)."""
    prev = is_grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Node:
    __slots__ = ("seq", "inputs", "backward_fn", "op")

    def __init__(self, inputs, backward_fn, op):
        self.seq = next(_seq)
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.op = op


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = _as_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._node: Node | None = None

    # -- basic properties ---------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- operators ----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    # -- method sugar -------------------------------------------------------
    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def abs(self):
        return tabs(self)

    def sqrt(self):
        return sqrt(self)

    def backward(self, grad=None) -> None:
        backward(self, grad)


def parameter(data, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=dtype)


def _wrap(x, like: np.ndarray | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _operands(a, b) -> tuple[Tensor, Tensor]:
    """Wrap constants (scalars, arrays) in the dtype of the tensor operand."""
    if isinstance(a, Tensor):
        return a, _wrap(b, a.data)
    b = _wrap(b)
    return _wrap(a, b.data), b


def make_op(out: np.ndarray, inputs: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    """Wrap ``out`` and, when recording, attach the adjoint closure.

    ``backward_fn(g)`` returns one gradient (or None) per input, in the shape
    of the output broadcast; reduction to each input's shape happens here.
    """
    t = Tensor.__new__(Tensor)
    t.data = out
    t.grad = None
    t._node = None
    t.requires_grad = False
    if is_grad_enabled() and any(x.requires_grad for x in inputs):
        t.requires_grad = True
        t._node = Node(tuple(inputs), backward_fn, op)
    return t


def unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are not broadcastable") from None


# ---------------------------------------------------------------------------
# Tape and backward
# ---------------------------------------------------------------------------


class Tape:
    """Ancestors of an output, ordered by execution sequence."""

    def __init__(self, tensors: list[Tensor]):
        self.tensors = tensors

    @classmethod
    def from_output(cls, out: Tensor) -> "Tape":
        seen: set[int] = set()
        found: list[Tensor] = []
        stack = [out]
        while stack:
            t = stack.pop()
            if id(t) in seen or t._node is None:
                continue
            seen.add(id(t))
            found.append(t)
            stack.extend(t._node.inputs)
        found.sort(key=lambda t: t._node.seq)
        return cls(found)

    def __len__(self) -> int:
        return len(self.tensors)

    def ops(self) -> list[str]:
        return [t._node.op for t in self.tensors]


def backward(loss: Tensor, grad=None) -> None:
    if grad is None:
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grad = np.ones_like(loss.data)
    else:
        grad = np.asarray(grad, dtype=loss.dtype).reshape(loss.shape)
    if loss._node is None:
        if loss.requires_grad:
            loss.grad = grad.copy() if loss.grad is None else loss.grad + grad
        return

    tape = Tape.from_output(loss)
    pending: dict[int, np.ndarray] = {id(loss): grad}
    for t in reversed(tape.tensors):
        g = pending.pop(id(t), None)
        node = t._node
        if g is None:
            continue
        in_grads = node.backward_fn(g)
        for x, gx in zip(node.inputs, in_grads):
            if gx is None or not x.requires_grad:
                continue
            gx = unbroadcast(gx, x.shape)
            if x._node is None:
                x.grad = gx.astype(x.dtype, copy=True) if x.grad is None else x.grad + gx.astype(x.dtype)
            else:
                key = id(x)
                pending[key] = gx if key not in pending else pending[key] + gx
    # the tape is consumed: release the graph
    for t in tape.tensors:
        t._node = None


# ---------------------------------------------------------------------------
# element-wise arithmetic
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _operands(a, b)
    _broadcast_shape(a, b, "add")
    return make_op(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    a, b = _operands(a, b)
    _broadcast_shape(a, b, "sub")
    return make_op(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    a, b = _operands(a, b)
    _broadcast_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return make_op(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def div(a, b) -> Tensor:
    a, b = _operands(a, b)
    _broadcast_shape(a, b, "div")
    ad, bd = a.data, b.data
    out = ad / bd
    return make_op(out, (a, b), lambda g: (g / bd, -g * out / bd), "div")


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return make_op(a.data * s, (a,), lambda g: (g * s,), "scale")


def neg(a: Tensor) -> Tensor:
    return make_op(-a.data, (a,), lambda g: (-g,), "neg")


def power(a: Tensor, p: float) -> Tensor:
    ad = a.data
    return make_op(ad**p, (a,), lambda g: (g * p * ad ** (p - 1),), "pow")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make_op(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    ad = a.data
    return make_op(np.log(ad), (a,), lambda g: (g / ad,), "log")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return make_op(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def tabs(a: Tensor) -> Tensor:
    ad = a.data
    return make_op(np.abs(ad), (a,), lambda g: (g * np.sign(ad),), "abs")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return make_op(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def sigmoid(a: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return make_op(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return make_op(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def softplus(a: Tensor) -> Tensor:
    ad = a.data
    out = np.logaddexp(0.0, ad).astype(ad.dtype, copy=False)
    return make_op(out, (a,), lambda g: (g * 0.5 * (1.0 + np.tanh(0.5 * ad)),), "softplus")


def silu(a: Tensor) -> Tensor:
    ad = a.data
    s = 0.5 * (1.0 + np.tanh(0.5 * ad))
    return make_op(ad * s, (a,), lambda g: (g * s * (1.0 + ad * (1.0 - s)),), "silu")


GELU_C = float(np.sqrt(2.0 / np.pi))
GELU_K = 0.044715


def gelu(a: Tensor) -> Tensor:
    """GELU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))."""
    x = a.data
    t = np.tanh(GELU_C * (x + GELU_K * x**3))
    out = 0.5 * x * (1.0 + t)

    def bw(g):
        dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * dt),)

    return make_op(out, (a,), bw, "gelu")


# ---------------------------------------------------------------------------
# reductions and shape manipulation
# ---------------------------------------------------------------------------


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)
    shape = a.shape

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape),)

    return make_op(np.asarray(out), (a,), bw, "sum")


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    n = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return scale(tsum(a, axes, keepdims), 1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return make_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return make_op(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def getitem(a: Tensor, idx) -> Tensor:
    shape, dtype = a.shape, a.dtype
    parts = idx if isinstance(idx, tuple) else (idx,)
    basic = all(isinstance(p, (slice, int, type(Ellipsis))) or p is None for p in parts)

    def bw(g):
        full = np.zeros(shape, dtype=dtype)
        if basic:
            full[idx] += g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return make_op(np.array(a.data[idx]), (a,), bw, "getitem")


def flip(a: Tensor, axis: int) -> Tensor:
    return make_op(np.flip(a.data, axis).copy(), (a,), lambda g: (np.flip(g, axis),), "flip")


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return make_op(
        np.concatenate([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: tuple(np.split(g, cuts, axis=axis)),
        "concat",
    )


def split(a: Tensor, sections: int, axis: int = 0) -> list[Tensor]:
    n = a.shape[axis]
    if n % sections:
        raise ShapeError(f"split: axis {axis} of extent {n} not divisible into {sections}")
    step = n // sections
    out = []
    for i in range(sections):
        idx = [slice(None)] * a.ndim
        idx[axis] = slice(i * step, (i + 1) * step)
        out.append(getitem(a, tuple(idx)))
    return out


def pad2d(a: Tensor, pad: tuple[int, int, int, int], mode: str = "reflect") -> Tensor:
    """Pad the last two axes by (top, bottom, left, right)."""
    top, bottom, left, right = pad
    if not any(pad):
        return a
    widths = [(0, 0)] * (a.ndim - 2) + [(top, bottom), (left, right)]
    out = np.pad(a.data, widths, mode=mode)
    if mode == "constant":
        h, w = a.shape[-2:]
        return make_op(out, (a,), lambda g: (g[..., top : top + h, left : left + w],), "pad")
    # reflect padding is linear: differentiate through the index map
    h, w = a.shape[-2:]
    rows = np.pad(np.arange(h), (top, bottom), mode=mode)
    cols = np.pad(np.arange(w), (left, right), mode=mode)

    def bw(g):
        gr = np.zeros(g.shape[:-2] + (h, g.shape[-1]), dtype=g.dtype)
        np.add.at(gr, (Ellipsis, rows, slice(None)), g)
        gx = np.zeros(g.shape[:-2] + (h, w), dtype=g.dtype)
        np.add.at(gx, (Ellipsis, slice(None), cols), gr)
        return (gx,)

    return make_op(out, (a,), bw, "pad")


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return make_op(
        ad @ bd,
        (a, b),
        lambda g: (g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g),
        "matmul",
    )


def separable(x: Tensor, mh: np.ndarray, mw: np.ndarray) -> Tensor:
    """Apply constant matrices on the last two axes: ``mh @ x @ mw.T``.

    Shared by the DCT, average pooling, and bilinear resampling; all three
    are separable linear maps, so the adjoint is ``mh.T @ g @ mw``.
    """
    mh = mh.astype(x.dtype, copy=False)
    mw = mw.astype(x.dtype, copy=False)
    out = mh @ x.data @ mw.T
    return make_op(out, (x,), lambda g: (mh.T @ g @ mw,), "separable")
