"""Sinusoidal temporal encoding with clip-relative positions.

The frame index is rescaled to ``pos * S / T`` before entering the usual
sin/cos encoding, so the encoding depends on where a frame sits within the
clip rather than on its absolute index.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .tensor import DTYPE, ShapeError, as_tensor

BASE = 10000.0


@dataclass(frozen=True)
class VpeConfig:
    dim: int
    scale: float = 500.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"VPE scale must be positive, got {self.scale}")
        if self.dim < 2 or self.dim % 2:
            raise ValueError(f"VPE dimension must be even and >= 2, got {self.dim}")


def scaled_position(pos: int, n_frames: int, scale: float) -> float:
    # Reduce pos/T first so (k*pos, k*T) and (pos, T) take the identical
    # floating-point path.
    r = Fraction(int(pos), int(n_frames))
    return scale * r.numerator / r.denominator


def _rates(dim: int) -> np.ndarray:
    return BASE ** (np.arange(0, dim, 2, dtype=DTYPE) / dim)


def vpe_encode(pos: int, n_frames: int, cfg: VpeConfig) -> np.ndarray:
    if n_frames < 1:
        raise ValueError(f"frame count must be >= 1, got {n_frames}")
    if not 0 <= pos < n_frames:
        raise IndexError(f"frame index {pos} outside [0, {n_frames})")
    p = scaled_position(pos, n_frames, cfg.scale)
    angles = p / _rates(cfg.dim)
    out = np.empty(cfg.dim, dtype=DTYPE)
    out[0::2] = np.sin(angles)
    out[1::2] = np.cos(angles)
    return out


def vpe_table(n_frames: int, cfg: VpeConfig) -> np.ndarray:
    """(T, d) encodings for every frame of a T-frame clip."""
    return np.stack([vpe_encode(t, n_frames, cfg) for t in range(n_frames)])


def add_temporal_encoding(vq, cfg: VpeConfig) -> np.ndarray:
    """Add each frame's encoding to all M query vectors of that frame.

    Accepts (T, M, D) or batched (B, T, M, D) semantics.
    """
    vq = as_tensor(vq, ndim=(3, 4), name="video semantics")
    if vq.shape[-1] != cfg.dim:
        raise ShapeError(f"encoding dim {cfg.dim} does not match feature dim {vq.shape[-1]}")
    return vq + vpe_table(vq.shape[-3], cfg)[:, None, :]
