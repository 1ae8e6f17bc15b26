"""Experiment configuration shared by the harness, the estimator and the CLI."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .hstf import H_FLOOR
from .model import ModelConfig

PLACEMENTS = ("random", "contiguous", "first")
DISTRACTORS = ("noise", "latent")
OPTIMIZERS = ("adamw", "sgd")


@dataclass(frozen=True)
class ExperimentConfig:
    # extents
    T: int = 15
    M: int = 32
    N: int = 32
    D: int = 32
    d: int = 32
    N_v: int = 16
    C: int = 32
    N_p: int = 8
    # filtering
    alpha: float = 1.0
    beta: float = 0.0
    S: float = 500.0
    h_floor: float = H_FLOOR
    # ablation flags
    vpe: bool = True
    pbtf: bool = True
    similarity_after_vpe: bool = False
    share_qformer: bool = False
    # synthetic data
    n_relevant: int = 3
    placement: str = "random"
    noise: float = 0.5
    distractors: str = "noise"
    latent_dim: int = 8
    n_train: int = 512
    n_test: int = 128
    # optimization
    epochs: int = 30
    batch_size: int = 32
    lr: float = 3e-3
    weight_decay: float = 0.05
    warmup_steps: int = 20
    warmup_lr: float = 1e-6
    optimizer: str = "adamw"
    seed: int = 0

    def __post_init__(self):
        for name in ("T", "M", "N", "D", "d", "N_v", "C", "N_p", "latent_dim", "n_train", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.n_relevant < 1:
            raise ConfigError("at least one relevant frame is required")
        if self.n_relevant > self.T:
            raise ConfigError(f"n_relevant={self.n_relevant} exceeds T={self.T}")
        if self.distractors not in DISTRACTORS:
            raise ConfigError(f"distractors must be one of {DISTRACTORS}, got {self.distractors!r}")
        if self.placement not in PLACEMENTS:
            raise ConfigError(f"placement must be one of {PLACEMENTS}, got {self.placement!r}")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be >= 0")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.noise < 0 or self.epochs < 0 or self.lr < 0 or self.n_test < 0:
            raise ConfigError("noise, epochs, lr and n_test must be >= 0")

    @classmethod
    def desk(cls, **overrides) -> "ExperimentConfig":
        """Reduced extents that train in well under a minute on one core."""
        base = dict(M=8, N=8, D=32, d=32, C=32)
        base.update(overrides)
        return cls(**base)

    def replace(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            n_frames=self.T, n_queries=self.M, n_tokens=self.N, dim=self.D, kv_dim=self.d,
            patch_dim=self.C, prompt_dim=self.D, out_dim=self.d,
            alpha=self.alpha, beta=self.beta, vpe_scale=self.S, h_floor=self.h_floor,
            use_vpe=self.vpe, fuse_text=self.pbtf, sim_after_vpe=self.similarity_after_vpe,
            share_qformer=self.share_qformer,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        data = json.loads(Path(path).read_text())
        return cls.from_dict({k.replace("-", "_"): v for k, v in data.items()})
