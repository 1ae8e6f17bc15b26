"""Dense float64 primitives shared by every layer.

Tensors are plain ``numpy.ndarray`` objects in float64, row-major. The
functions here add the shape checking and numerically careful variants the
rest of the package relies on.
"""
from __future__ import annotations

import numpy as np

from .errors import ShapeError

DTYPE = np.float64
LN_EPS = 1e-5


def as_tensor(x, *, ndim: int | tuple[int, ...] | None = None, name: str = "tensor") -> np.ndarray:
    arr = np.ascontiguousarray(x, dtype=DTYPE)
    if ndim is not None:
        allowed = (ndim,) if isinstance(ndim, int) else ndim
        if arr.ndim not in allowed:
            raise ShapeError(f"{name} must have rank in {allowed}, got shape {arr.shape}")
    return arr


def matmul(a, b) -> np.ndarray:
    a = as_tensor(a, ndim=2, name="left operand")
    b = as_tensor(b, ndim=2, name="right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}: inner dimensions differ")
    return a @ b


def softmax_rows(x) -> np.ndarray:
    """Softmax along the last axis with max subtraction."""
    x = np.asarray(x, dtype=DTYPE)
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def layer_norm(x, gamma, beta, eps: float = LN_EPS) -> np.ndarray:
    """Normalize over the last axis with population variance, then scale and shift."""
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[-1] < 2:
        raise ShapeError(f"layer_norm needs at least 2 features, got {x.shape[-1]}")
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


class Rng:
    """Seeded counter-based generator (Philox); same seed gives the same stream."""

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.Philox(self.seed))

    def gaussian(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape, dtype=DTYPE)

    def uniform(self, shape=None, low: float = 0.0, high: float = 1.0):
        return self._gen.uniform(low, high, shape)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, size: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=size, replace=replace)

    def child(self, key: int) -> "Rng":
        """Independent stream derived from this seed and ``key``; does not advance self."""
        mixed = np.random.SeedSequence([self.seed, int(key)]).generate_state(2, dtype=np.uint64)
        return Rng(int(mixed[0]))


def gaussian(rng: Rng, shape) -> np.ndarray:
    return rng.gaussian(shape)
