"""Prompt-conditioned query construction and key/value projection.

Trainable query slots are concatenated with the text semantic vectors and
passed through one self-attention layer; only the outputs at the trainable
slots are kept and projected, giving the time-sensitive queries. The video
semantics (with temporal encoding) are flattened frame-major and projected
to keys and values.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import ops
from .tensor import Rng, ShapeError, as_tensor


@dataclass
class PbtfParams:
    queries: np.ndarray  # (N, D)
    attn_q: np.ndarray  # (D, D)
    attn_k: np.ndarray
    attn_v: np.ndarray
    w_out: np.ndarray  # (D, D)
    w_k: np.ndarray  # (D, d)
    w_v: np.ndarray  # (D, d)
    n_heads: int = 1

    @property
    def n_tokens(self) -> int:
        return self.queries.shape[0]

    @property
    def dim(self) -> int:
        return self.queries.shape[1]

    def to_dict(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in vars(self).items() if k != "n_heads"}

    @classmethod
    def from_dict(cls, entries, n_heads: int = 1) -> "PbtfParams":
        return cls(**{k: entries[k] for k in ("queries", "attn_q", "attn_k", "attn_v", "w_out", "w_k", "w_v")},
                   n_heads=n_heads)


class KeyValueBank(NamedTuple):
    keys: np.ndarray  # (..., T*M, d), row t*M + m
    values: np.ndarray


def init_pbtf(rng: Rng, n_tokens: int, dim: int, kv_dim: int | None = None, n_heads: int = 1,
              query_std: float = 1.0, kv_std: float = 1.0) -> PbtfParams:
    kv_dim = dim if kv_dim is None else kv_dim
    s = 1.0 / np.sqrt(dim)
    return PbtfParams(
        queries=rng.gaussian((n_tokens, dim)) * query_std,
        attn_q=rng.gaussian((dim, dim)) * s,
        attn_k=rng.gaussian((dim, dim)) * s,
        attn_v=rng.gaussian((dim, dim)) * s,
        w_out=rng.gaussian((dim, dim)) * s,
        w_k=rng.gaussian((dim, kv_dim)) * s * kv_std,
        w_v=rng.gaussian((dim, kv_dim)) * s,
        n_heads=n_heads,
    )


def flatten_tokens(vq: np.ndarray) -> np.ndarray:
    """(..., T, M, D) -> (..., T*M, D), frame-major."""
    return vq.reshape(*vq.shape[:-3], vq.shape[-3] * vq.shape[-2], vq.shape[-1])


def unflatten_tokens(flat: np.ndarray, n_frames: int) -> np.ndarray:
    return flat.reshape(*flat.shape[:-2], n_frames, flat.shape[-2] // n_frames, flat.shape[-1])


def pbtf_queries_fwd(pq: np.ndarray, params: PbtfParams, fuse_text: bool = True):
    if pq.shape[-1] != params.dim:
        raise ShapeError(f"text semantics width {pq.shape[-1]} does not match query width {params.dim}")
    lead = pq.shape[:-2]
    n = params.n_tokens
    if not fuse_text:
        vs = np.broadcast_to(params.queries @ params.w_out, lead + params.queries.shape)
        return np.array(vs), ("plain", lead)
    seq = np.concatenate([np.broadcast_to(params.queries, lead + params.queries.shape), pq], axis=-2)
    q, c_q = ops.linear_fwd(params.queries, params.attn_q)
    k, c_k = ops.linear_fwd(seq, params.attn_k)
    v, c_v = ops.linear_fwd(seq, params.attn_v)
    o, c_att = ops.attention_fwd(q, k, v, n_heads=params.n_heads)
    vs, c_out = ops.linear_fwd(o, params.w_out)
    return vs, ("fused", n, c_q, c_k, c_v, c_att, c_out)


def pbtf_queries_bwd(dvs: np.ndarray, params: PbtfParams, cache):
    """Returns (grads dict, d_pq)."""
    grads = {}
    if cache[0] == "plain":
        dvs2 = dvs.reshape(-1, *dvs.shape[-2:]).sum(axis=0)
        grads["w_out"] = params.queries.T @ dvs2
        grads["queries"] = dvs2 @ params.w_out.T
        for name in ("attn_q", "attn_k", "attn_v"):
            grads[name] = np.zeros_like(getattr(params, name))
        return grads, None
    _, n, c_q, c_k, c_v, c_att, c_out = cache
    do, grads["w_out"], _ = ops.linear_bwd(dvs, c_out)
    dq, dk, dv, _ = ops.attention_bwd(do, c_att)
    dseq_v, grads["attn_v"], _ = ops.linear_bwd(dv, c_v)
    dseq_k, grads["attn_k"], _ = ops.linear_bwd(dk, c_k)
    dq_in, grads["attn_q"], _ = ops.linear_bwd(dq, c_q)
    dseq = dseq_k + dseq_v
    grads["queries"] = ops.sum_to(dq_in, params.queries.shape) + ops.sum_to(dseq[..., :n, :], params.queries.shape)
    return grads, dseq[..., n:, :]


def pbtf_queries(pq, params: PbtfParams, fuse_text: bool = True) -> np.ndarray:
    """(M, D) text semantics -> (N, D) time-sensitive queries.

    ``pq`` may have zero rows, which reduces to self-attention among the
    trainable slots. With ``fuse_text=False`` the queries are the projected
    trainable slots alone.
    """
    pq = np.asarray(pq, dtype=np.float64)
    if pq.ndim != 2:
        raise ShapeError(f"text semantics must be (M, D), got {pq.shape}")
    return pbtf_queries_fwd(pq, params, fuse_text)[0]


def project_kv_fwd(vq_pe: np.ndarray, params: PbtfParams):
    if vq_pe.shape[-1] != params.dim:
        raise ShapeError(f"video semantics width {vq_pe.shape[-1]} does not match projections {params.w_k.shape}")
    flat = flatten_tokens(vq_pe)
    keys, c_k = ops.linear_fwd(flat, params.w_k)
    values, c_v = ops.linear_fwd(flat, params.w_v)
    return KeyValueBank(keys, values), (vq_pe.shape, c_k, c_v)


def project_kv_bwd(dkeys, dvalues, cache):
    shape, c_k, c_v = cache
    dflat_k, dwk, _ = ops.linear_bwd(dkeys, c_k)
    dflat_v, dwv, _ = ops.linear_bwd(dvalues, c_v)
    return {"w_k": dwk, "w_v": dwv}, (dflat_k + dflat_v).reshape(shape)


def project_kv(vq_pe, params: PbtfParams) -> KeyValueBank:
    """(T, M, D) encoded video semantics -> keys and values of shape (T*M, d)."""
    vq_pe = as_tensor(vq_pe, ndim=(3, 4), name="video semantics")
    return project_kv_fwd(vq_pe, params)[0]
