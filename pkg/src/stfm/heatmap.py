"""CSV and 8-bit PGM dumps of the similarity matrix and the attention map."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ShapeError


def to_gray(x: np.ndarray) -> np.ndarray:
    """Min-max scale to 0..255; a constant matrix maps to 0."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("heatmap values must be finite")
    lo, hi = x.min(), x.max()
    if hi <= lo:
        return np.zeros(x.shape, dtype=np.uint8)
    return np.rint((x - lo) / (hi - lo) * 255.0).astype(np.uint8)


def pgm_bytes(x: np.ndarray) -> bytes:
    g = to_gray(x)
    if g.ndim != 2:
        raise ShapeError(f"heatmap must be 2-D, got {g.shape}")
    rows, cols = g.shape
    return f"P5\n{cols} {rows}\n255\n".encode("ascii") + g.tobytes()


def read_pgm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    header = data.split(maxsplit=4)
    if header[0] != b"P5":
        raise ValueError(f"{path} is not a binary PGM")
    cols, rows, maxval = int(header[1]), int(header[2]), int(header[3])
    if maxval != 255:
        raise ValueError(f"unsupported PGM maxval {maxval}")
    return np.frombuffer(data[-rows * cols:], dtype=np.uint8).reshape(rows, cols)


def write_csv(x: np.ndarray, path: str | Path) -> None:
    # repr of a float64 round-trips exactly
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    Path(path).write_text("".join(",".join(repr(float(v)) for v in row) + "\n" for row in x))


def read_csv(path: str | Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)


def dump_heatmaps(h: np.ndarray, sam: np.ndarray, prefix: str | Path) -> list[Path]:
    """Write ``<prefix>_H`` (T x M) and ``<prefix>_SAM`` (N x T*M) as .csv and .pgm."""
    h, sam = np.asarray(h), np.asarray(sam)
    if h.ndim != 2 or sam.ndim != 2 or sam.shape[1] != h.size:
        raise ShapeError(f"expected H (T, M) and SAM (N, T*M), got {h.shape} and {sam.shape}")
    prefix = Path(prefix)
    written = []
    for tag, x in (("H", h), ("SAM", sam)):
        base = prefix.with_name(f"{prefix.name}_{tag}")
        write_csv(x, base.with_suffix(".csv"))
        base.with_suffix(".pgm").write_bytes(pgm_bytes(x))
        written += [base.with_suffix(".csv"), base.with_suffix(".pgm")]
    return written
