"""Parameter containers and the handful of layers every stage is built from."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import functional as F
from .tensor import Tensor, parameter


class Module:
    """Walks attributes for parameters, sub-modules and lists of sub-modules."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.astype(p.dtype, copy=True)

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Pointwise(Module):
    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, bias: bool = True, zero: bool = False):
        w = np.zeros((c_out, c_in)) if zero else uniform_init(rng, (c_out, c_in), c_in)
        self.weight = parameter(w)
        self.bias = parameter(np.zeros(c_out)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d_pointwise(x, self.weight, self.bias)


class Depthwise(Module):
    def __init__(self, channels: int, rng: np.random.Generator, kernel: int = 3, bias: bool = True):
        self.weight = parameter(uniform_init(rng, (channels, kernel, kernel), kernel * kernel))
        self.bias = parameter(np.zeros(channels)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d_depthwise(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, channels: int, axis: int = 1):
        self.weight = parameter(np.ones(channels))
        self.bias = parameter(np.zeros(channels))
        self._axis = axis

    def forward(self, x: Tensor) -> Tensor:
        return F.layernorm(x, self.weight, self.bias, axis=self._axis)


class Embed(Module):
    """3x3 depthwise followed by pointwise 3 -> C."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator):
        self.dw = Depthwise(c_in, rng)
        self.pw = Pointwise(c_in, c_out, rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.pw(self.dw(x))
