"""Binary checkpoint container: named float32 arrays in a fixed order plus
a JSON metadata block, written so a round-trip is bit-exact.

Layout, all integers little-endian u32 unless noted:
  8 bytes  magic "HOLOCKPT"
  u32      format version
  u32      entry count
  entries  name length, UTF-8 name, rank, dims (u32 each), raw float32
           little-endian values
  u32      metadata length, then UTF-8 JSON
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"HOLOCKPT"
VERSION = 1


def save_checkpoint(path, arrays: dict, meta: dict):
    """Write arrays (in dict order) and metadata; values stored as float32."""
    chunks = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    chunks.append(struct.pack("<I", len(meta_bytes)))
    chunks.append(meta_bytes)
    with open(path, "wb") as f:
        f.write(b"".join(chunks))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ValueError(f"byte {self.pos}: truncated checkpoint, needed {n} bytes for {what}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def load_checkpoint(path):
    """Read back (arrays, meta); arrays come out float32 in file order."""
    with open(path, "rb") as f:
        r = _Reader(f.read())
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise ValueError("byte 0: not a checkpoint file (bad magic)")
    version = r.u32("version")
    if version != VERSION:
        raise ValueError(f"byte 8: unsupported checkpoint version {version}")
    count = r.u32("entry count")
    arrays = {}
    for i in range(count):
        name_len = r.u32(f"entry {i} name length")
        name = r.take(name_len, f"entry {i} name").decode("utf-8")
        rank = r.u32(f"'{name}' rank")
        if rank > 8:
            raise ValueError(f"byte {r.pos}: entry '{name}' has implausible rank {rank}")
        dims = tuple(r.u32(f"'{name}' dim {d}") for d in range(rank))
        n_values = int(np.prod(dims, dtype=np.int64)) if rank else 1
        raw = r.take(4 * n_values, f"'{name}' payload")
        arrays[name] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(dims)
    meta_len = r.u32("metadata length")
    meta = json.loads(r.take(meta_len, "metadata").decode("utf-8"))
    if r.pos != len(r.data):
        raise ValueError(f"byte {r.pos}: {len(r.data) - r.pos} unexpected trailing bytes")
    return arrays, meta
