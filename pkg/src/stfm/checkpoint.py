"""Binary parameter container.

Layout, all integers little-endian::

    b"STFM" | u32 version | u64 record count
    per record: u64 name length | name (utf-8) | u64 rank | u64 extents[rank] | f64 payload
"""
from __future__ import annotations

import os
import struct
import tempfile
from collections.abc import Mapping
from pathlib import Path

import numpy as np

from .errors import CheckpointFormatError, CheckpointShapeError, CheckpointTruncatedError, CheckpointVersionError
from .params import ParamSet

MAGIC = b"STFM"
VERSION = 1
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
MAX_RANK = 16


def to_bytes(params: Mapping[str, np.ndarray]) -> bytes:
    out = [MAGIC, _U32.pack(VERSION), _U64.pack(len(params))]
    for name, arr in params.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        out += [_U64.pack(len(raw)), raw, _U64.pack(arr.ndim)]
        out += [_U64.pack(n) for n in arr.shape]
        out.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointTruncatedError(
                f"file ends at byte {len(self.buf)} while reading {what} ({n} bytes at offset {self.pos})")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u64(self, what: str) -> int:
        return _U64.unpack(self.take(8, what))[0]


def from_bytes(buf: bytes, expected: Mapping[str, np.ndarray] | None = None) -> ParamSet:
    """Parse a container; nothing is returned unless the whole file is valid."""
    if buf[:4] != MAGIC:
        if len(buf) < 4 and MAGIC.startswith(buf):
            raise CheckpointTruncatedError("file ends inside the magic bytes")
        raise CheckpointFormatError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}")
    r = _Reader(buf)
    r.pos = 4
    version = _U32.unpack(r.take(4, "version"))[0]
    if version != VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {version}, expected {VERSION}")
    count = r.u64("record count")
    ps = ParamSet()
    for i in range(count):
        name_len = r.u64(f"record {i} name length")
        try:
            name = r.take(name_len, f"record {i} name").decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointFormatError(f"record {i} name is not utf-8") from e
        if name in ps:
            raise CheckpointFormatError(f"duplicate tensor name {name!r}")
        rank = r.u64(f"{name!r} rank")
        if rank > MAX_RANK:
            raise CheckpointFormatError(f"{name!r} declares rank {rank}")
        shape = tuple(r.u64(f"{name!r} extent") for _ in range(rank))
        size = int(np.prod(shape, dtype=np.uint64)) if shape else 1
        payload = r.take(8 * size, f"{name!r} payload")
        ps[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
    if r.pos != len(buf):
        raise CheckpointFormatError(f"{len(buf) - r.pos} trailing bytes after {count} records")
    if expected is not None:
        check_layout(ps, expected)
    return ps


def check_layout(loaded: Mapping[str, np.ndarray], expected: Mapping[str, np.ndarray]) -> None:
    if set(loaded) != set(expected):
        missing = sorted(set(expected) - set(loaded))
        extra = sorted(set(loaded) - set(expected))
        raise CheckpointShapeError(f"tensor names differ: missing {missing}, unexpected {extra}")
    for k, v in expected.items():
        if loaded[k].shape != np.shape(v):
            raise CheckpointShapeError(f"{k!r} has shape {loaded[k].shape}, expected {np.shape(v)}")


def save(params: Mapping[str, np.ndarray], path: str | Path) -> Path:
    """Write atomically: a reader never sees a half-written file."""
    path = Path(path)
    data = to_bytes(params)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def load(path: str | Path, expected: Mapping[str, np.ndarray] | None = None) -> ParamSet:
    return from_bytes(Path(path).read_bytes(), expected)
