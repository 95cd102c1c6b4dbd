"""Versioned flat binary checkpoints.

Layout (all integers little-endian uint32)::

    magic  b"PSGANCKP"
    version, record count, metadata length
    metadata: UTF-8 JSON (sorted keys)
    records: name length, name bytes, rank, dims..., float32 data
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict

import numpy as np

from psgan.errors import CheckpointError

MAGIC = b"PSGANCKP"
FORMAT_VERSION = 1

_U32 = struct.Struct("<I")


@dataclass
class Checkpoint:
    """Everything needed to resume training or run inference.

    ``arrays`` holds named float32 arrays: ``gen/...`` and ``disc/...``
    parameters plus ``adam_g/m/...``-style optimizer moments. ``meta``
    holds the step counter, configs, optimizer step counts and RNG state.
    """

    arrays: Dict[str, np.ndarray] = field(default_factory=dict)
    meta: Dict = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def group(self, prefix: str) -> Dict[str, np.ndarray]:
        p = prefix.rstrip("/") + "/"
        return {k[len(p):]: v for k, v in self.arrays.items() if k.startswith(p)}

    @property
    def step(self) -> int:
        return int(self.meta.get("step", 0))

    def __eq__(self, other):
        if not isinstance(other, Checkpoint):
            return NotImplemented
        if self.version != other.version or self.meta != other.meta:
            return False
        if list(self.arrays) != list(other.arrays):
            return False
        return all(a.shape == b.shape and a.tobytes() == b.tobytes()
                   for a, b in zip(self.arrays.values(), other.arrays.values()))


def encode(ckpt: Checkpoint) -> bytes:
    meta = json.dumps(ckpt.meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, _U32.pack(ckpt.version), _U32.pack(len(ckpt.arrays)), _U32.pack(len(meta)), meta]
    for name, arr in ckpt.arrays.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        parts.append(_U32.pack(len(raw)))
        parts.append(raw)
        parts.append(_U32.pack(arr.ndim))
        parts.extend(_U32.pack(d) for d in arr.shape)
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode(buf: bytes) -> Checkpoint:
    if buf[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    pos = len(MAGIC)

    def u32():
        nonlocal pos
        if pos + 4 > len(buf):
            raise CheckpointError("truncated checkpoint")
        (val,) = _U32.unpack_from(buf, pos)
        pos += 4
        return val

    version = u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
    count, meta_len = u32(), u32()
    if pos + meta_len > len(buf):
        raise CheckpointError("truncated checkpoint metadata")
    try:
        meta = json.loads(buf[pos:pos + meta_len].decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"corrupt checkpoint metadata: {exc}") from None
    pos += meta_len
    arrays = {}
    for _ in range(count):
        name_len = u32()
        if pos + name_len > len(buf):
            raise CheckpointError("truncated checkpoint record name")
        name = buf[pos:pos + name_len].decode("utf-8", errors="replace")
        pos += name_len
        rank = u32()
        dims = tuple(u32() for _ in range(rank))
        nbytes = 4 * int(np.prod(dims, dtype=np.int64))
        if pos + nbytes > len(buf):
            raise CheckpointError(f"truncated data for record {name!r}")
        arrays[name] = np.frombuffer(buf, dtype="<f4", count=nbytes // 4, offset=pos).reshape(dims).astype(np.float32)
        pos += nbytes
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes after last record")
    return Checkpoint(arrays, meta, version)


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode(ckpt))
    tmp.replace(path)
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    return decode(path.read_bytes())
