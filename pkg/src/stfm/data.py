"""Planted-relevance synthetic video/prompt instances.

Each instance draws a topic latent. Relevant frames show that topic, the
remaining frames show unrelated latents, and the prompt tokens are a noisy
embedding of the topic. The regression target is a fixed linear readout of
the relevant-frame latents, so predicting it well requires attending to the
relevant frames.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .config import ExperimentConfig
from .errors import ConfigError
from .tensor import Rng

WORLD_KEY = 0x5EED


@dataclass(frozen=True)
class World:
    """Fixed maps shared by every instance of one experiment."""

    visual_embed: np.ndarray  # (k, C)
    text_embed: np.ndarray  # (k, D)
    readout: np.ndarray  # (k, d)


class SyntheticInstance(NamedTuple):
    patches: np.ndarray  # (T, N_v, C)
    prompt: np.ndarray  # (N_p, D)
    relevant: np.ndarray  # (T,) bool
    target: np.ndarray  # (d,)
    topic: np.ndarray  # (k,)
    frame_latents: np.ndarray  # (T, k)


class Dataset(NamedTuple):
    patches: np.ndarray  # (n, T, N_v, C)
    prompts: np.ndarray  # (n, N_p, D)
    relevant: np.ndarray  # (n, T)
    targets: np.ndarray  # (n, d)

    def __len__(self) -> int:
        return self.patches.shape[0]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for a in self:
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()[:16]

    def take(self, idx) -> "Dataset":
        return Dataset(*(a[idx] for a in self))


def make_world(cfg: ExperimentConfig) -> World:
    rng = Rng(cfg.seed).child(WORLD_KEY)
    k = cfg.latent_dim
    return World(
        visual_embed=rng.gaussian((k, cfg.C)) / np.sqrt(k),
        text_embed=rng.gaussian((k, cfg.D)) / np.sqrt(k),
        readout=rng.gaussian((k, cfg.d)) / np.sqrt(k),
    )


def _sphere(rng: Rng, k: int, n: int | None = None) -> np.ndarray:
    x = rng.gaussian((k,) if n is None else (n, k))
    return x / np.linalg.norm(x, axis=-1, keepdims=True) * np.sqrt(k)


def relevant_frames(cfg: ExperimentConfig, rng: Rng) -> np.ndarray:
    if cfg.n_relevant < 1:
        raise ConfigError("at least one relevant frame is required")
    mask = np.zeros(cfg.T, dtype=bool)
    if cfg.placement == "first":
        mask[: cfg.n_relevant] = True
    elif cfg.placement == "contiguous":
        start = int(rng.integers(0, cfg.T - cfg.n_relevant + 1))
        mask[start : start + cfg.n_relevant] = True
    else:
        mask[rng.choice(cfg.T, cfg.n_relevant)] = True
    return mask


def generate_instance(cfg: ExperimentConfig, rng: Rng, world: World | None = None) -> SyntheticInstance:
    world = make_world(cfg) if world is None else world
    k = cfg.latent_dim
    topic = _sphere(rng, k)
    mask = relevant_frames(cfg, rng)
    latents = _sphere(rng, k, cfg.T)
    latents[mask] = topic
    clean = latents @ world.visual_embed  # (T, C)
    patches = np.repeat(clean[:, None, :], cfg.N_v, axis=1) + cfg.noise * rng.gaussian((cfg.T, cfg.N_v, cfg.C))
    if cfg.distractors == "noise":
        # per-frame content with the same power as a relevant frame, isotropic
        # in feature space instead of lying on the topic embedding
        scale = np.sqrt((clean[mask] ** 2).mean())
        n_irr = int((~mask).sum())
        frame_noise = scale * rng.gaussian((n_irr, cfg.C))
        patches[~mask] = frame_noise[:, None, :] + cfg.noise * rng.gaussian((n_irr, cfg.N_v, cfg.C))
        latents[~mask] = frame_noise @ np.linalg.pinv(world.visual_embed)
    prompt = topic @ world.text_embed + cfg.noise * rng.gaussian((cfg.N_p, cfg.D))
    target = (latents[mask] @ world.readout).mean(axis=0)
    return SyntheticInstance(patches, prompt, mask, target, topic, latents)


def generate_dataset(cfg: ExperimentConfig, n: int, stream: int) -> Dataset:
    """``n`` instances from an independent stream (0 = train, 1 = test, ...)."""
    world = make_world(cfg)
    rng = Rng(cfg.seed).child(stream)
    items = [generate_instance(cfg, rng, world) for _ in range(n)]
    if not items:
        return Dataset(np.zeros((0, cfg.T, cfg.N_v, cfg.C)), np.zeros((0, cfg.N_p, cfg.D)),
                       np.zeros((0, cfg.T), dtype=bool), np.zeros((0, cfg.d)))
    return Dataset(
        patches=np.stack([i.patches for i in items]),
        prompts=np.stack([i.prompt for i in items]),
        relevant=np.stack([i.relevant for i in items]),
        targets=np.stack([i.target for i in items]),
    )
