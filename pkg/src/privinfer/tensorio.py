"""Tensor fixture I/O.

Binary format: magic, u8 rank, u32 little-endian dims, float64
little-endian values.  A text loader accepts whitespace-separated
numbers with an optional ``# shape: ...`` header line, for small
hand-written fixtures.  Values are real numbers; ring encoding happens
at the point of use.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PTEN"

__all__ = ["save_tensor", "load_tensor", "dump_tensor_bytes", "parse_tensor_bytes"]


def dump_tensor_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype="<f8")
    head = MAGIC + struct.pack("<B", arr.ndim)
    head += b"".join(struct.pack("<I", d) for d in arr.shape)
    return head + arr.tobytes()


def parse_tensor_bytes(data: bytes) -> np.ndarray:
    if data[:4] == MAGIC:
        ndim = data[4]
        shape = struct.unpack_from(f"<{ndim}I", data, 5)
        off = 5 + 4 * ndim
        return np.frombuffer(data[off:], dtype="<f8").reshape(shape).copy()
    # text fallback
    text = data.decode()
    shape = None
    values = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line.lstrip("#").strip()
            if body.startswith("shape:"):
                shape = tuple(int(t) for t in body[6:].replace(",", " ").split())
            continue
        values.extend(float(t) for t in line.replace(",", " ").split())
    arr = np.array(values, dtype=np.float64)
    return arr.reshape(shape) if shape else arr


def save_tensor(path, arr: np.ndarray):
    Path(path).write_bytes(dump_tensor_bytes(arr))


def load_tensor(path) -> np.ndarray:
    return parse_tensor_bytes(Path(path).read_bytes())
