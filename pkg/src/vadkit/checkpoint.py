"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"FANO"  u32 version
    u32 n_entries
      n_entries x { u32 path_len, path (utf-8), u8 dtype_code, u32 rank,
                    rank x u64 dim, raw little-endian values }
    u32 n_meta
      n_meta x { u32 key_len, key (utf-8), u32 value_len, value (utf-8) }

Entries are written in the order given, so a fixed insertion order gives a
byte-identical file.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"FANO"
VERSION = 1

_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("<i8")}
_CODES = {np.dtype(np.float32): 1, np.dtype(np.float64): 2, np.dtype(np.int64): 3}


class CheckpointError(ValueError):
    pass


def _write_str(buf: io.BytesIO, s: str) -> None:
    raw = s.encode("utf-8")
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)


def dumps(arrays: Mapping[str, np.ndarray], metadata: Mapping[str, str] | None = None) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    buf.write(struct.pack("<I", len(arrays)))
    for path, arr in arrays.items():
        arr = np.asarray(arr)
        code = _CODES.get(arr.dtype)
        if code is None:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for entry {path!r}")
        _write_str(buf, path)
        buf.write(struct.pack("<BI", code, arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    meta = dict(metadata or {})
    buf.write(struct.pack("<I", len(meta)))
    for key, value in meta.items():
        _write_str(buf, str(key))
        _write_str(buf, str(value))
    return buf.getvalue()


def loads(blob: bytes) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    view = memoryview(blob)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated checkpoint")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    def read_u32() -> int:
        return struct.unpack("<I", take(4))[0]

    def read_str() -> str:
        return bytes(take(read_u32())).decode("utf-8")

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version = read_u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(read_u32()):
        path = read_str()
        code, rank = struct.unpack("<BI", take(5))
        if code not in _DTYPES:
            raise CheckpointError(f"unknown dtype code {code} for entry {path!r}")
        dims = struct.unpack(f"<{rank}Q", take(8 * rank))
        dtype = _DTYPES[code]
        count = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(take(count * dtype.itemsize), dtype=dtype).reshape(dims)
        arrays[path] = data.astype(dtype.newbyteorder("="), copy=True)
    metadata = {}
    for _ in range(read_u32()):
        key = read_str()
        metadata[key] = read_str()
    if pos != len(view):
        raise CheckpointError(f"{len(view) - pos} trailing bytes after metadata")
    return arrays, metadata


def save(path: str | Path, arrays: Mapping[str, np.ndarray], metadata: Mapping[str, str] | None = None) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(dumps(arrays, metadata))
    tmp.replace(path)


def load(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, str]]:
    return loads(Path(path).read_bytes())
