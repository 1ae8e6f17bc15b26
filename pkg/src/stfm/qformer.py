"""Query-transformer compressor used by the visual and text semantic branches.

A fixed set of learnable queries cross-attends over an unordered feature
sequence and is refined by a feed-forward block, giving M output vectors
regardless of the input length. No positional information is injected, so
the output is invariant to the order of the input rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ops
from .tensor import Rng, ShapeError, as_tensor

FF_RATIO = 4


@dataclass
class QFormerLayer:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_ff1: np.ndarray
    b_ff1: np.ndarray
    w_ff2: np.ndarray
    b_ff2: np.ndarray
    ln_gamma: np.ndarray
    ln_beta: np.ndarray


@dataclass
class QFormerParams:
    queries: np.ndarray
    layers: list[QFormerLayer] = field(default_factory=list)
    n_heads: int = 1

    @property
    def n_queries(self) -> int:
        return self.queries.shape[0]

    @property
    def dim(self) -> int:
        return self.queries.shape[1]

    @property
    def in_dim(self) -> int:
        return self.layers[0].w_k.shape[0]

    def to_dict(self) -> dict[str, np.ndarray]:
        out = {"queries": self.queries}
        for i, layer in enumerate(self.layers):
            for name, arr in vars(layer).items():
                out[f"layers.{i}.{name}"] = arr
        return out

    @classmethod
    def from_dict(cls, entries, n_heads: int = 1) -> "QFormerParams":
        n_layers = len({k.split(".")[1] for k in entries if k.startswith("layers.")})
        layers = [
            QFormerLayer(**{f: entries[f"layers.{i}.{f}"] for f in QFormerLayer.__dataclass_fields__})
            for i in range(n_layers)
        ]
        return cls(queries=entries["queries"], layers=layers, n_heads=n_heads)


def init_qformer(
    rng: Rng,
    n_queries: int,
    in_dim: int,
    dim: int,
    n_layers: int = 1,
    n_heads: int = 1,
    query_std: float = 1.0,
) -> QFormerParams:
    if dim % n_heads:
        raise ValueError(f"dim {dim} is not divisible by n_heads {n_heads}")
    hidden = FF_RATIO * dim
    layers = []
    for _ in range(n_layers):
        layers.append(
            QFormerLayer(
                w_q=rng.gaussian((dim, dim)) / np.sqrt(dim),
                w_k=rng.gaussian((in_dim, dim)) / np.sqrt(in_dim),
                w_v=rng.gaussian((in_dim, dim)) / np.sqrt(in_dim),
                w_ff1=rng.gaussian((dim, hidden)) / np.sqrt(dim),
                b_ff1=np.zeros(hidden),
                w_ff2=rng.gaussian((hidden, dim)) / np.sqrt(hidden) * 0.5,
                b_ff2=np.zeros(dim),
                ln_gamma=np.ones(dim),
                ln_beta=np.zeros(dim),
            )
        )
    queries = rng.gaussian((n_queries, dim)) * query_std
    return QFormerParams(queries=queries, layers=layers, n_heads=n_heads)


def _check_input(x: np.ndarray, params: QFormerParams) -> None:
    if x.ndim < 2 or x.shape[-2] < 1:
        raise ShapeError(f"feature sequence must be (..., L, C) with L >= 1, got {x.shape}")
    if x.shape[-1] != params.in_dim:
        raise ShapeError(
            f"feature width {x.shape[-1]} does not match key projection {params.layers[0].w_k.shape}"
        )


def qformer_forward(x: np.ndarray, params: QFormerParams):
    """Batched compressor forward over (..., L, C) inputs; returns (out, caches)."""
    _check_input(x, params)
    state = params.queries
    caches = []
    for layer in params.layers:
        q, c_q = ops.linear_fwd(state, layer.w_q)
        k, c_k = ops.linear_fwd(x, layer.w_k)
        v, c_v = ops.linear_fwd(x, layer.w_v)
        a, c_att = ops.attention_fwd(q, k, v, n_heads=params.n_heads)
        h1 = state + a
        f1, c_f1 = ops.linear_fwd(h1, layer.w_ff1, layer.b_ff1)
        g, c_g = ops.gelu_fwd(f1)
        f2, c_f2 = ops.linear_fwd(g, layer.w_ff2, layer.b_ff2)
        h2 = h1 + f2
        out, c_ln = ops.layer_norm_fwd(h2, layer.ln_gamma, layer.ln_beta)
        caches.append((state.shape, c_q, c_k, c_v, c_att, c_f1, c_g, c_f2, c_ln))
        state = out
    return state, caches


def qformer_backward(dout: np.ndarray, params: QFormerParams, caches) -> dict[str, np.ndarray]:
    """Parameter gradients for :func:`qformer_forward`, keyed like ``to_dict``."""
    grads: dict[str, np.ndarray] = {}
    d_state = dout
    for i in reversed(range(len(params.layers))):
        state_shape, c_q, c_k, c_v, c_att, c_f1, c_g, c_f2, c_ln = caches[i]
        pre = f"layers.{i}."
        dh2, grads[pre + "ln_gamma"], grads[pre + "ln_beta"] = ops.layer_norm_bwd(d_state, c_ln)
        dg, grads[pre + "w_ff2"], grads[pre + "b_ff2"] = ops.linear_bwd(dh2, c_f2)
        df1 = ops.gelu_bwd(dg, c_g)
        dh1_ff, grads[pre + "w_ff1"], grads[pre + "b_ff1"] = ops.linear_bwd(df1, c_f1)
        dh1 = dh2 + dh1_ff
        dq, dk, dv, _ = ops.attention_bwd(dh1, c_att)
        _, grads[pre + "w_v"], _ = ops.linear_bwd(dv, c_v)
        _, grads[pre + "w_k"], _ = ops.linear_bwd(dk, c_k)
        dstate_q, grads[pre + "w_q"], _ = ops.linear_bwd(dq, c_q)
        d_state = ops.sum_to(dh1 + dstate_q, state_shape)
    grads["queries"] = d_state
    return grads


def qformer_compress(x, params: QFormerParams) -> np.ndarray:
    """Compress an (L, C) feature sequence to (M, D) query outputs."""
    x = as_tensor(x, ndim=2, name="feature sequence")
    return qformer_forward(x, params)[0]


def extract_video_semantics(vf, params: QFormerParams) -> np.ndarray:
    """(T, N_v, C) patch features -> (T, M, D), each frame compressed on its own."""
    vf = as_tensor(vf, ndim=3, name="patch features")
    return qformer_forward(vf, params)[0]


def extract_text_semantics(pf, params: QFormerParams) -> np.ndarray:
    """(N_p, D) prompt features -> (M, D)."""
    return qformer_compress(pf, params)
