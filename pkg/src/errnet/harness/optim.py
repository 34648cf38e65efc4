"""AdamW with decoupled weight decay and a cosine-annealed learning rate."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..tensor import Tensor

log = logging.getLogger(__name__)


def cosine_lr(t: int, total: int, lr0: float, lr_min: float) -> float:
    """lr_min + (lr0 - lr_min) (1 + cos(pi t / T)) / 2, clamped to t in [0, T]."""
    if total <= 0:
        return lr0
    t = min(max(t, 0), total)
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + math.cos(math.pi * t / total))


@dataclass
class OptimizerState:
    lr0: float = 5e-4
    lr_min: float = 1e-7
    total: int = 100_000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    skipped: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def lr(self) -> float:
        return cosine_lr(self.step, self.total, self.lr0, self.lr_min)


def adamw_step(params: list[Tensor], grads: list[np.ndarray | None], state: OptimizerState) -> float:
    """One update in place; returns the learning rate used (0.0 when skipped)."""
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    if any(g is not None and not np.all(np.isfinite(g)) for g in grads):
        state.skipped += 1
        log.warning("non-finite gradient at step %d; update skipped (%d so far)", state.step, state.skipped)
        return 0.0
    lr = state.lr()
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g is None:
            continue
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        if state.weight_decay:
            p.data *= 1.0 - lr * state.weight_decay
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype, copy=False)
    return lr


class AdamW:
    def __init__(self, params: list[Tensor], lr: float = 5e-4, lr_min: float = 1e-7, total: int = 100_000,
                 betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = list(params)
        self.state = OptimizerState(lr, lr_min, total, betas[0], betas[1], eps, weight_decay)

    def step(self) -> float:
        return adamw_step(self.params, [p.grad for p in self.params], self.state)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
