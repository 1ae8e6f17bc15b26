"""Similarity-biased cross-attention and the full filtering stage.

The attention logits carry an additive ``alpha * log(H)`` term, which is the
same as multiplying each token's unnormalized weight by ``H ** alpha``.
Aggregated values are optionally reweighted by ``H ** beta`` and layer
normalized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import ops
from .errors import ConfigError, ShapeError
from .pbtf import KeyValueBank, PbtfParams, pbtf_queries_bwd, pbtf_queries_fwd, project_kv_bwd, project_kv_fwd
from .tensor import Rng, as_tensor, softmax_rows
from .temporal import VpeConfig, vpe_table

H_FLOOR = 1e-6


@dataclass
class HstfParams:
    w_q: np.ndarray  # (D, d)
    ln_gamma: np.ndarray  # (d,)
    ln_beta: np.ndarray  # (d,)
    alpha: float = 1.0
    beta: float = 0.0
    h_floor: float = H_FLOOR
    n_heads: int = 1

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.beta < 0:
            raise ConfigError(f"beta must be >= 0, got {self.beta}")
        if not self.h_floor > 0:
            raise ConfigError(f"h_floor must be > 0, got {self.h_floor}")

    def to_dict(self) -> dict[str, np.ndarray]:
        return {"w_q": self.w_q, "ln_gamma": self.ln_gamma, "ln_beta": self.ln_beta}


def init_hstf(rng: Rng, dim: int, kv_dim: int | None = None, q_std: float = 1.0, **kw) -> HstfParams:
    kv_dim = dim if kv_dim is None else kv_dim
    return HstfParams(
        w_q=rng.gaussian((dim, kv_dim)) / np.sqrt(dim) * q_std,
        ln_gamma=np.ones(kv_dim),
        ln_beta=np.zeros(kv_dim),
        **kw,
    )


def _flat_h(h: np.ndarray) -> np.ndarray:
    return h.reshape(*h.shape[:-2], h.shape[-2] * h.shape[-1])


def _check_bank(vs, kv: KeyValueBank, h, params: HstfParams):
    if vs.shape[-1] != params.w_q.shape[0]:
        raise ShapeError(f"queries {vs.shape} do not match query projection {params.w_q.shape}")
    if kv.keys.shape[-1] != params.w_q.shape[1]:
        raise ShapeError(f"keys {kv.keys.shape} do not match query projection {params.w_q.shape}")
    if kv.keys.shape != kv.values.shape:
        raise ShapeError(f"keys {kv.keys.shape} and values {kv.values.shape} differ")
    if h.shape[-2] * h.shape[-1] != kv.keys.shape[-2]:
        raise ShapeError(f"similarity {h.shape} does not cover {kv.keys.shape[-2]} tokens")


def hstf_sam(vs, kv: KeyValueBank, h, params: HstfParams) -> np.ndarray:
    """softmax(alpha * log(max(H, floor)) + Q K^T / sqrt(d)) with Q = vs W_q."""
    vs = as_tensor(vs)
    h = as_tensor(h)
    _check_bank(vs, kv, h, params)
    q = vs @ params.w_q
    logits = q @ np.swapaxes(kv.keys, -1, -2) / math.sqrt(q.shape[-1])
    bias = params.alpha * np.log(np.maximum(_flat_h(h), params.h_floor))
    return softmax_rows(logits + bias[..., None, :])


def hstf_sam_ratio(vs, kv: KeyValueBank, h, params: HstfParams) -> np.ndarray:
    """Same map written as H_i^alpha exp(l_ji) / sum_i H_i^alpha exp(l_ji).

    No max subtraction; meant for small, well-scaled inputs.
    """
    vs = as_tensor(vs)
    h = as_tensor(h)
    _check_bank(vs, kv, h, params)
    n, tm = vs.shape[-2], kv.keys.shape[-2]
    d = params.w_q.shape[1]
    hc = np.maximum(_flat_h(h), params.h_floor)
    out = np.empty(vs.shape[:-2] + (n, tm))
    q = vs @ params.w_q
    for j in range(n):
        w = np.empty(vs.shape[:-2] + (tm,))
        for i in range(tm):
            dot = (q[..., j, :] * kv.keys[..., i, :]).sum(axis=-1)
            w[..., i] = hc[..., i] ** params.alpha * np.exp(dot / math.sqrt(d))
        out[..., j, :] = w / w.sum(axis=-1, keepdims=True)
    return out


def hstf_output(sam, kv: KeyValueBank, h, params: HstfParams) -> np.ndarray:
    """Z_j = LayerNorm(sum_i max(H_i, floor)^beta SAM_ji values_i)."""
    sam = as_tensor(sam)
    h = as_tensor(h)
    if sam.shape[-1] != kv.values.shape[-2]:
        raise ShapeError(f"attention map {sam.shape} does not match {kv.values.shape[-2]} tokens")
    hb = ops.clamped_pow_fwd(_flat_h(h), params.h_floor, params.beta)[0]
    agg = sam @ (hb[..., None] * kv.values)
    return ops.layer_norm_fwd(agg, params.ln_gamma, params.ln_beta)[0]


class StfmOutput(NamedTuple):
    z: np.ndarray  # (..., N, d)
    sam: np.ndarray  # (..., N, T*M)
    h: np.ndarray  # (..., T, M)


def stfm_fwd(vq, pq, pbtf: PbtfParams, hstf: HstfParams, pe: np.ndarray, *,
             fuse_text: bool = True, sim_after_vpe: bool = False):
    """Batched filtering stage; ``pe`` is the (T, D) temporal table added to vq."""
    if vq.shape[-2:] != pq.shape[-2:]:
        raise ShapeError(f"video semantics {vq.shape} and text semantics {pq.shape} disagree on M or D")
    if pe.shape != (vq.shape[-3], vq.shape[-1]):
        raise ShapeError(f"temporal table {pe.shape} does not fit video semantics {vq.shape}")
    vq_pe = vq + pe[:, None, :]
    h, c_h = ops.cosine01_fwd(vq_pe if sim_after_vpe else vq, np.expand_dims(pq, -3))
    kv, c_kv = project_kv_fwd(vq_pe, pbtf)
    vs, c_vs = pbtf_queries_fwd(pq, pbtf, fuse_text)
    q, c_q = ops.linear_fwd(vs, hstf.w_q)
    hflat = _flat_h(h)
    logh, c_log = ops.clamped_log_fwd(hflat, hstf.h_floor)
    hb, c_pow = ops.clamped_pow_fwd(hflat, hstf.h_floor, hstf.beta)
    vw = hb[..., None] * kv.values
    agg, c_att = ops.attention_fwd(q, kv.keys, vw, bias=(hstf.alpha * logh)[..., None, :], n_heads=hstf.n_heads)
    z, c_ln = ops.layer_norm_fwd(agg, hstf.ln_gamma, hstf.ln_beta)
    sam = c_att[3]
    tape = (h.shape, sim_after_vpe, c_h, kv, c_kv, c_vs, c_q, c_log, hb, c_pow, c_att, c_ln)
    return StfmOutput(z, sam, h), tape


def stfm_bwd(dz, pbtf: PbtfParams, hstf: HstfParams, tape):
    """Returns (grads, d_vq, d_pq, d_pe); grads keyed ``pbtf.*`` / ``hstf.*``."""
    h_shape, sim_after_vpe, c_h, kv, c_kv, c_vs, c_q, c_log, hb, c_pow, c_att, c_ln = tape
    grads = {}
    dagg, grads["hstf.ln_gamma"], grads["hstf.ln_beta"] = ops.layer_norm_bwd(dz, c_ln)
    dq, dkeys, dvw, dlogits = ops.attention_bwd(dagg, c_att)
    dbias = dlogits.sum(axis=-2)
    dvalues = dvw * hb[..., None]
    dhb = (dvw * kv.values).sum(axis=-1)
    dhflat = hstf.alpha * ops.clamped_log_bwd(dbias, c_log) + ops.clamped_pow_bwd(dhb, c_pow)
    dh = dhflat.reshape(h_shape)
    dvs, grads["hstf.w_q"], _ = ops.linear_bwd(dq, c_q)
    g_pbtf, dpq = pbtf_queries_bwd(dvs, pbtf, c_vs)
    g_kv, dvq_pe = project_kv_bwd(dkeys, dvalues, c_kv)
    g_pbtf.update(g_kv)
    grads.update({f"pbtf.{k}": v for k, v in g_pbtf.items()})
    dsim_v, dsim_p = ops.cosine01_bwd(dh, c_h)
    dpq = dsim_p.sum(axis=-3) if dpq is None else dpq + dsim_p.sum(axis=-3)
    if sim_after_vpe:
        dvq_pe = dvq_pe + dsim_v
        dvq = dvq_pe
    else:
        dvq = dvq_pe + dsim_v
    dpe = ops.sum_to(dvq_pe, (h_shape[-2], 1, dvq_pe.shape[-1]))[:, 0, :]
    return grads, dvq, dpq, dpe


def stfm_forward(vq, pq, pbtf: PbtfParams, hstf: HstfParams, vpe: VpeConfig | None = None, *,
                 fuse_text: bool = True, sim_after_vpe: bool = False) -> StfmOutput:
    """Filter (T, M, D) video semantics with (M, D) text semantics.

    Returns the filtered tokens Z (N, d), the attention map SAM (N, T*M) and
    the similarity matrix H (T, M). Without a ``vpe`` config no temporal
    encoding is added.
    """
    vq = as_tensor(vq, ndim=(3, 4), name="video semantics")
    pq = as_tensor(pq, ndim=(2, 3), name="text semantics")
    t, d = vq.shape[-3], vq.shape[-1]
    pe = np.zeros((t, d)) if vpe is None else vpe_table(t, vpe)
    return stfm_fwd(vq, pq, pbtf, hstf, pe, fuse_text=fuse_text, sim_after_vpe=sim_after_vpe)[0]
