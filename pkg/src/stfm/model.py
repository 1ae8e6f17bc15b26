"""End-to-end model: two compressors, the filtering stage and a linear readout.

``forward`` records a tape of per-op caches and ``loss_and_grad`` replays it
in reverse; the graph is fixed, so every backward step is written out by
hand.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import NamedTuple

import numpy as np

from . import ops
from .errors import ConfigError, ShapeError
from .hstf import H_FLOOR, HstfParams, stfm_bwd, stfm_fwd
from .params import GradientSet, ParamSet
from .pbtf import PbtfParams, init_pbtf
from .qformer import QFormerParams, init_qformer, qformer_backward, qformer_forward
from .tensor import Rng
from .temporal import VpeConfig, vpe_table


@dataclass(frozen=True)
class ModelConfig:
    n_frames: int = 15
    n_queries: int = 32
    n_tokens: int = 32
    dim: int = 32
    kv_dim: int | None = None
    patch_dim: int = 32
    prompt_dim: int | None = None
    out_dim: int | None = None
    alpha: float = 1.0
    beta: float = 0.0
    vpe_scale: float = 500.0
    h_floor: float = H_FLOOR
    use_vpe: bool = True
    fuse_text: bool = True
    sim_after_vpe: bool = False
    share_qformer: bool = False
    qformer_layers: int = 1
    n_heads: int = 1
    query_std: float = 1.0
    attn_std: float = 1.0
    tie_qformer_init: bool = False

    def __post_init__(self):
        for name in ("n_frames", "n_queries", "n_tokens", "dim", "patch_dim", "qformer_layers", "n_heads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError(f"alpha and beta must be >= 0, got {self.alpha}, {self.beta}")
        if self.use_vpe and self.dim % 2:
            raise ConfigError(f"temporal encoding needs an even dim, got {self.dim}")
        if self.share_qformer and self.patch_dim != self.p_dim:
            raise ConfigError("a shared compressor needs patch_dim == prompt_dim")

    @property
    def d(self) -> int:
        return self.dim if self.kv_dim is None else self.kv_dim

    @property
    def p_dim(self) -> int:
        return self.dim if self.prompt_dim is None else self.prompt_dim

    @property
    def o_dim(self) -> int:
        return self.d if self.out_dim is None else self.out_dim

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def init_params(cfg: ModelConfig, rng: Rng) -> ParamSet:
    ps = ParamSet()
    img = init_qformer(rng.child(1), cfg.n_queries, cfg.patch_dim, cfg.dim, cfg.qformer_layers,
                       cfg.n_heads, query_std=cfg.query_std)
    ps.update_prefixed("img_qformer", img.to_dict())
    if not cfg.share_qformer:
        if cfg.tie_qformer_init and cfg.p_dim == cfg.patch_dim:
            txt = QFormerParams.from_dict({k: v.copy() for k, v in img.to_dict().items()}, cfg.n_heads)
        else:
            txt = init_qformer(rng.child(2), cfg.n_queries, cfg.p_dim, cfg.dim, cfg.qformer_layers,
                               cfg.n_heads, query_std=cfg.query_std)
        ps.update_prefixed("txt_qformer", txt.to_dict())
    pb = init_pbtf(rng.child(3), cfg.n_tokens, cfg.dim, cfg.d, cfg.n_heads, kv_std=cfg.attn_std)
    ps.update_prefixed("pbtf", pb.to_dict())
    hrng = rng.child(4)
    ps["hstf.w_q"] = hrng.gaussian((cfg.dim, cfg.d)) / np.sqrt(cfg.dim) * cfg.attn_std
    ps["hstf.ln_gamma"] = np.ones(cfg.d)
    ps["hstf.ln_beta"] = np.zeros(cfg.d)
    if not cfg.use_vpe:
        ps["temporal.table"] = rng.child(5).gaussian((cfg.n_frames, cfg.dim)) * 0.02
    rr = rng.child(6)
    ps["readout.w"] = rr.gaussian((cfg.d, cfg.o_dim)) / np.sqrt(cfg.d)
    ps["readout.b"] = np.zeros(cfg.o_dim)
    return ps


def qformer_view(ps: ParamSet, cfg: ModelConfig, branch: str) -> QFormerParams:
    prefix = "img_qformer" if branch == "img" or cfg.share_qformer else "txt_qformer"
    return QFormerParams.from_dict(ps.subset(prefix), n_heads=cfg.n_heads)


def pbtf_view(ps: ParamSet, cfg: ModelConfig) -> PbtfParams:
    return PbtfParams.from_dict(ps.subset("pbtf"), n_heads=cfg.n_heads)


def hstf_view(ps: ParamSet, cfg: ModelConfig) -> HstfParams:
    return HstfParams(
        w_q=ps["hstf.w_q"], ln_gamma=ps["hstf.ln_gamma"], ln_beta=ps["hstf.ln_beta"],
        alpha=cfg.alpha, beta=cfg.beta, h_floor=cfg.h_floor, n_heads=cfg.n_heads,
    )


def temporal_table(ps: ParamSet, cfg: ModelConfig) -> np.ndarray:
    if cfg.use_vpe:
        return vpe_table(cfg.n_frames, VpeConfig(cfg.dim, cfg.vpe_scale))
    return ps["temporal.table"]


class Outputs(NamedTuple):
    vq: np.ndarray  # (B, T, M, D)
    pq: np.ndarray  # (B, M, D)
    h: np.ndarray  # (B, T, M)
    sam: np.ndarray  # (B, N, T*M)
    z: np.ndarray  # (B, N, d)
    pred: np.ndarray  # (B, out)


def _check_batch(cfg: ModelConfig, vf: np.ndarray, pf: np.ndarray) -> None:
    if vf.ndim != 4 or vf.shape[1] != cfg.n_frames or vf.shape[3] != cfg.patch_dim:
        raise ShapeError(f"video batch must be (B, {cfg.n_frames}, N_v, {cfg.patch_dim}), got {vf.shape}")
    if pf.ndim != 3 or pf.shape[2] != cfg.p_dim or pf.shape[0] != vf.shape[0]:
        raise ShapeError(f"prompt batch must be ({vf.shape[0]}, N_p, {cfg.p_dim}), got {pf.shape}")


def forward(ps: ParamSet, cfg: ModelConfig, vf: np.ndarray, pf: np.ndarray):
    """Batched forward over (B, T, N_v, C) video and (B, N_p, D) prompt features."""
    _check_batch(cfg, vf, pf)
    img = qformer_view(ps, cfg, "img")
    txt = qformer_view(ps, cfg, "txt")
    vq, c_img = qformer_forward(vf, img)
    pq, c_txt = qformer_forward(pf, txt)
    pe = temporal_table(ps, cfg)
    pb, hs = pbtf_view(ps, cfg), hstf_view(ps, cfg)
    out, c_stfm = stfm_fwd(vq, pq, pb, hs, pe, fuse_text=cfg.fuse_text, sim_after_vpe=cfg.sim_after_vpe)
    pooled = out.z.mean(axis=-2)
    pred, c_read = ops.linear_fwd(pooled, ps["readout.w"], ps["readout.b"])
    tape = (img, txt, c_img, c_txt, pb, hs, c_stfm, out.z.shape[-2], c_read)
    return Outputs(vq, pq, out.h, out.sam, out.z, pred), tape


def backward(dpred: np.ndarray, ps: ParamSet, cfg: ModelConfig, tape) -> GradientSet:
    img, txt, c_img, c_txt, pb, hs, c_stfm, n_tok, c_read = tape
    g = {}
    dpooled, g["readout.w"], g["readout.b"] = ops.linear_bwd(dpred, c_read)
    dz = np.repeat(dpooled[..., None, :] / n_tok, n_tok, axis=-2)
    g_stfm, dvq, dpq, dpe = stfm_bwd(dz, pb, hs, c_stfm)
    g.update(g_stfm)
    if not cfg.use_vpe:
        g["temporal.table"] = dpe
    g_img = qformer_backward(dvq, img, c_img)
    g_txt = qformer_backward(dpq, txt, c_txt)
    if cfg.share_qformer:
        for k, v in g_txt.items():
            g_img[k] = g_img[k] + v
    else:
        g.update({f"txt_qformer.{k}": v for k, v in g_txt.items()})
    g.update({f"img_qformer.{k}": v for k, v in g_img.items()})
    grads = GradientSet((k, g[k]) for k in ps)
    for k, v in grads.items():
        if v.shape != ps[k].shape:
            raise ShapeError(f"gradient for {k!r} has shape {v.shape}, expected {ps[k].shape}")
    grads.check_finite("gradient for")
    return grads


def mse(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean((pred - target) ** 2))


def loss_and_grad(ps: ParamSet, cfg: ModelConfig, vf, pf, y):
    """Mean squared error of the readout and its gradient for every parameter."""
    out, tape = forward(ps, cfg, vf, pf)
    diff = out.pred - y
    loss = float(np.mean(diff**2))
    grads = backward(2.0 * diff / diff.size, ps, cfg, tape)
    return loss, grads, out
