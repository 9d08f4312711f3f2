"""Binary parameter checkpoints.

Layout (little-endian): magic b"ENCY", format version u32, tensor count u32,
then per tensor: name length u32, UTF-8 name, rank u32, dims u32 each,
f32 payload. Round-trips must be bit-exact.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

MAGIC = b"ENCY"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype=np.float32)
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"bad magic {raw[:4]!r}")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}")
    off = 12
    out = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", raw, off)
            off += 4
            name = raw[off:off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<I", raw, off)
            off += 4
            dims = struct.unpack_from(f"<{rank}I", raw, off)
            off += 4 * rank
            n = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(raw, dtype="<f4", count=n, offset=off).reshape(dims)
            off += 4 * n
            out[name] = arr.copy()
    except struct.error as e:
        raise CheckpointError(f"truncated checkpoint: {e}") from e
    if off != len(raw):
        raise CheckpointError("trailing bytes after last tensor")
    return out


def checkpoint_hash(tensors: dict[str, np.ndarray]) -> str:
    """Stable content hash of a named parameter set."""
    h = hashlib.sha256()
    for name in sorted(tensors):
        h.update(name.encode("utf-8"))
        h.update(np.ascontiguousarray(tensors[name], dtype=np.float32).tobytes())
    return h.hexdigest()
