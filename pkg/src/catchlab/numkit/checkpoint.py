"""Versioned binary checkpoint container.

Layout (all integers little-endian):

    magic   13 bytes  b"CATCHLAB-CKPT"
    version u32       currently 1
    count   u32       number of named tensors
    entry*  u16 name length, UTF-8 name,
            u32 ndim, u32 * ndim dims,
            float64 LE row-major values

Round-trips are bit-exact. Non-tensor metadata (model dims, mode flags,
normalization provenance) rides along as a JSON document encoded into a
float64 byte tensor under the reserved name "__meta__".
"""
from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import CheckpointError

MAGIC = b"CATCHLAB-CKPT"
VERSION = 1
META_KEY = "__meta__"


def save_checkpoint(path, arrays, meta=None):
    items = dict(arrays)
    if meta is not None:
        blob = json.dumps(meta, sort_keys=True).encode("utf-8")
        items[META_KEY] = np.frombuffer(blob, dtype=np.uint8).astype(np.float64)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(items)))
        for name, arr in items.items():
            arr = np.asarray(arr, dtype=np.float64)
            if not arr.flags.c_contiguous:
                arr = arr.copy()
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<I", dim))
            f.write(arr.astype("<f8").tobytes())


def load_checkpoint(path):
    """Returns (arrays, meta); meta is None when absent."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic")
    off = len(MAGIC)
    version, count = struct.unpack_from("<II", blob, off)
    off += 8
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off:off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<I", blob, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", blob, off) if ndim else ()
        off += 4 * ndim
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=off).copy()
        off += 8 * n
        arrays[name] = arr.reshape(shape)
    if off != len(blob):
        raise CheckpointError(f"{path}: trailing bytes after tensor table")

    meta = None
    if META_KEY in arrays:
        raw = arrays.pop(META_KEY)
        meta = json.loads(raw.astype(np.uint8).tobytes().decode("utf-8"))
    return arrays, meta
