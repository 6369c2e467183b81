"""Binary parameter checkpoint.

All integers little-endian::

    magic      4 bytes   b"TCCK"
    version    u16       1
    meta_len   u32       length of the metadata block
    meta       bytes     UTF-8 JSON object (model config, seed, history ...)
    count      u32       number of tensors
    per tensor, in insertion order:
        name_len  u16
        name      bytes  UTF-8
        ndim      u8
        dims      u32 * ndim
        payload   f32 * prod(dims), little-endian, C order
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np
import torch

MAGIC = b"TCCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps(tensors: Mapping[str, torch.Tensor], meta: Mapping | None = None) -> bytes:
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<HI", VERSION, len(meta_bytes)), meta_bytes, struct.pack("<I", len(tensors))]
    for name, t in tensors.items():
        arr = np.asarray(t.detach().cpu().numpy(), dtype="<f4", order="C")
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def loads(blob: bytes) -> tuple[dict[str, torch.Tensor], dict]:
    if blob[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    pos = 4
    version, meta_len = struct.unpack_from("<HI", blob, pos)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos += 6
    meta = json.loads(blob[pos : pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    tensors: dict[str, torch.Tensor] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos : pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        dims = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        n = int(np.prod(dims, dtype=np.int64))
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=pos).reshape(dims)
        pos += 4 * n
        tensors[name] = torch.from_numpy(arr.astype(np.float32))
    if pos != len(blob):
        raise CheckpointError(f"{len(blob) - pos} trailing bytes")
    return tensors, meta


def save(path: str | Path, tensors: Mapping[str, torch.Tensor], meta: Mapping | None = None) -> None:
    Path(path).write_bytes(dumps(tensors, meta))


def load(path: str | Path) -> tuple[dict[str, torch.Tensor], dict]:
    return loads(Path(path).read_bytes())
