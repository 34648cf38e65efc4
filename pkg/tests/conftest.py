import numpy as np
import pytest

from errnet.tensor import Tensor, no_grad


def numeric_grad(f, t: Tensor, h: float = 1e-6) -> np.ndarray:
    """Central differences of the scalar f() wrt every entry of t (h scaled by |t|)."""
    g = np.zeros(t.shape)
    flat = t.data.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        step = h * max(1.0, abs(old))
        flat[i] = old + step
        with no_grad():
            fp = float(f().data)
        flat[i] = old - step
        with no_grad():
            fm = float(f().data)
        flat[i] = old
        g.reshape(-1)[i] = (fp - fm) / (2 * step)
    return g


def rel_err(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def analytic_grads(f, tensors):
    for t in tensors:
        t.grad = None
    f().backward()
    return [t.grad.copy() for t in tensors]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
