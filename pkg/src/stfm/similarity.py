"""Semantic similarity between paired visual and text query vectors."""
from __future__ import annotations

import warnings

import numpy as np

from . import ops
from .tensor import ShapeError, as_tensor


class DegenerateSimilarityWarning(RuntimeWarning):
    """A zero-norm vector was compared; its similarity was set to 0.5."""


def _warn_degenerate(cache) -> None:
    nu, nv = cache[2], cache[3]
    if np.any(nu == 0) or np.any(nv == 0):
        warnings.warn(
            "zero-norm vector in similarity; using 0.5", DegenerateSimilarityWarning, stacklevel=3
        )


def cosine01(u, v) -> float:
    """Cosine similarity mapped affinely onto [0, 1]."""
    u = as_tensor(u, ndim=1, name="u")
    v = as_tensor(v, ndim=1, name="v")
    if u.shape != v.shape:
        raise ShapeError(f"vectors differ in length: {u.shape} vs {v.shape}")
    h, cache = ops.cosine01_fwd(u, v)
    _warn_degenerate(cache)
    return float(h)


def similarity_matrix(vq, pq) -> np.ndarray:
    """H[t, i] = cosine01(vq[t, i], pq[i]).

    The i-th visual vector of every frame is compared only with the i-th text
    vector. Batched inputs (B, T, M, D) / (B, M, D) are accepted too.
    """
    vq = as_tensor(vq, ndim=(3, 4), name="video semantics")
    pq = as_tensor(pq, ndim=(2, 3), name="text semantics")
    if vq.ndim - pq.ndim != 1 or vq.shape[-2:] != pq.shape[-2:] or vq.shape[:-3] != pq.shape[:-2]:
        raise ShapeError(f"video semantics {vq.shape} and text semantics {pq.shape} disagree on M or D")
    h, cache = ops.cosine01_fwd(vq, np.expand_dims(pq, -3))
    _warn_degenerate(cache)
    return h
