"""Versioned binary container for float32 arrays, shared by the corpus and
quantizer artifacts. Layout: magic ``TNSR``, version u16, ndim u8, dims u32
each, then row-major float32 payload. Little-endian throughout.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"TNSR"
VERSION = 1


class FormatError(ValueError):
    """Raised when a binary artifact fails header or size validation."""


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HB", VERSION, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: not a tensor file (bad magic {raw[:4]!r})")
    version, ndim = struct.unpack_from("<HB", raw, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported tensor file version {version}")
    shape = struct.unpack_from(f"<{ndim}I", raw, 7)
    offset = 7 + 4 * ndim
    count = int(np.prod(shape)) if ndim else 1
    expected = offset + 4 * count
    if len(raw) != expected:
        raise FormatError(f"{path}: payload size {len(raw)} != expected {expected}")
    data = np.frombuffer(raw, dtype="<f4", count=count, offset=offset)
    return data.reshape(shape).copy()
