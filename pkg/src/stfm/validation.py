"""Input checks for user-facing entry points."""
from __future__ import annotations

import numpy as np

from .errors import ShapeError


def check_array(x, ndim: int, name: str) -> np.ndarray:
    """float64 copy-free view of ``x`` with rank ``ndim`` and only finite values."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != ndim:
        raise ShapeError(f"{name} must have {ndim} dimensions, got shape {a.shape}")
    if a.size and not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains NaN or infinity")
    return a


def check_video_prompt(X) -> tuple[np.ndarray, np.ndarray]:
    """Split ``X = (patches, prompts)`` into (n, T, N_v, C) and (n, N_p, D) arrays."""
    if isinstance(X, np.ndarray) or not hasattr(X, "__len__") or len(X) != 2:
        raise TypeError("X must be a pair (patches, prompts)")
    patches = check_array(X[0], 4, "patches")
    prompts = check_array(X[1], 3, "prompts")
    if patches.shape[0] != prompts.shape[0]:
        raise ShapeError(f"{patches.shape[0]} videos but {prompts.shape[0]} prompts")
    if patches.shape[0] == 0:
        raise ValueError("X holds no samples")
    return patches, prompts


def check_targets(y, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    y = check_array(y, 2, "y")
    if y.shape[0] != n:
        raise ShapeError(f"y has {y.shape[0]} rows for {n} samples")
    return y


def check_mask(mask, n_frames: int) -> np.ndarray:
    m = np.asarray(mask)
    if m.dtype != bool:
        raise TypeError(f"relevance mask must be boolean, got {m.dtype}")
    if m.shape[-1] != n_frames:
        raise ShapeError(f"relevance mask covers {m.shape[-1]} frames, expected {n_frames}")
    return m
