"""Unit streams: fixed-width bit packing, frame-rate resampling, data-size
accounting, and the USEQ file format.

A stream of cluster IDs in [0, k) packs at ceil(log2 k) bits per unit,
MSB-first within the buffer, with zero pad bits at the tail.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensorfile import FormatError

USEQ_MAGIC = b"USEQ"
USEQ_VERSION = 1

MODALITIES = ("audio", "visual")


@dataclass
class UnitStream:
    """Discrete unit IDs at a fixed frame rate, tagged with provenance."""

    units: np.ndarray
    fps: float
    modality: str = "visual"
    language: str = ""
    speaker: str = ""

    def __post_init__(self) -> None:
        self.units = np.asarray(self.units, dtype=np.int32)
        if self.fps <= 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")

    def __len__(self) -> int:
        return len(self.units)


@dataclass
class PackedUnits:
    bits: bytes
    count: int
    bits_per_unit: int


def bits_per_unit(k: int) -> int:
    if k < 1:
        raise ValueError(f"codebook size must be >= 1, got {k}")
    return math.ceil(math.log2(k)) if k > 1 else 1


def packed_size(count: int, bpu: int) -> int:
    return (count * bpu + 7) // 8


def pack(units: np.ndarray, k: int) -> PackedUnits:
    """Pack IDs at ceil(log2 k) bits each, MSB-first, zero tail padding."""
    ids = np.asarray(units, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= k):
        raise ValueError(f"unit id out of range [0, {k})")
    bpu = bits_per_unit(k)
    if ids.size == 0:
        return PackedUnits(bits=b"", count=0, bits_per_unit=bpu)
    shifts = np.arange(bpu - 1, -1, -1, dtype=np.int64)
    bit_rows = ((ids[:, None] >> shifts) & 1).astype(np.uint8)
    payload = np.packbits(bit_rows.reshape(-1)).tobytes()
    return PackedUnits(bits=payload, count=int(ids.size), bits_per_unit=bpu)


def unpack(packed: PackedUnits) -> np.ndarray:
    """Exact inverse of pack. Raises on truncated buffers."""
    expected = packed_size(packed.count, packed.bits_per_unit)
    if len(packed.bits) != expected:
        raise FormatError(
            f"packed buffer has {len(packed.bits)} bytes, expected {expected}")
    if packed.count == 0:
        return np.zeros(0, dtype=np.int32)
    bits = np.unpackbits(np.frombuffer(packed.bits, dtype=np.uint8))
    bits = bits[: packed.count * packed.bits_per_unit]
    bits = bits.reshape(packed.count, packed.bits_per_unit).astype(np.int64)
    weights = 1 << np.arange(packed.bits_per_unit - 1, -1, -1, dtype=np.int64)
    return (bits @ weights).astype(np.int32)


def resample(stream: UnitStream, to_fps: float) -> UnitStream:
    """Nearest-frame index remap onto a new rate (categorical data, so no
    interpolation). Ties round up."""
    if to_fps <= 0:
        raise ValueError(f"target fps must be positive, got {to_fps}")
    n = len(stream.units)
    out_len = int(math.floor(n * to_fps / stream.fps + 0.5))
    if out_len == 0 or n == 0:
        ids = np.zeros(0, dtype=np.int32)
    else:
        src = np.floor(np.arange(out_len) * (stream.fps / to_fps) + 0.5)
        src = np.clip(src.astype(np.int64), 0, n - 1)
        ids = stream.units[src]
    return UnitStream(units=ids, fps=to_fps, modality=stream.modality,
                      language=stream.language, speaker=stream.speaker)


@dataclass
class CompressionReport:
    frame_bits: int
    unit_bits: int
    ratio: float
    percent: float


def compression_stats(frame_h: int, frame_w: int, bit_depth: int,
                      unit_bits: int) -> CompressionReport:
    """Per-frame data-size ratio: unit bits over raw frame bits."""
    if min(frame_h, frame_w, bit_depth, unit_bits) <= 0:
        raise ValueError("dimensions and bit widths must be positive")
    frame_bits = frame_h * frame_w * bit_depth
    ratio = unit_bits / frame_bits
    return CompressionReport(frame_bits=frame_bits, unit_bits=unit_bits,
                             ratio=ratio, percent=100.0 * ratio)


# ---------------------------------------------------------------------------
# USEQ file format
# ---------------------------------------------------------------------------

def save_units(path: str | Path, stream: UnitStream, k: int) -> None:
    packed = pack(stream.units, k)
    lang = stream.language.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(USEQ_MAGIC)
        fh.write(struct.pack("<H", USEQ_VERSION))
        fh.write(struct.pack("<I", k))
        fh.write(struct.pack("<f", stream.fps))
        fh.write(struct.pack("<B", MODALITIES.index(stream.modality)))
        fh.write(struct.pack("<H", len(lang)))
        fh.write(lang)
        fh.write(struct.pack("<Q", packed.count))
        fh.write(packed.bits)


def load_units(path: str | Path) -> tuple[UnitStream, int]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != USEQ_MAGIC:
        raise FormatError(f"{path}: not a unit file (bad magic {raw[:4]!r})")
    version, = struct.unpack_from("<H", raw, 4)
    if version != USEQ_VERSION:
        raise FormatError(f"{path}: unsupported unit file version {version}")
    k, = struct.unpack_from("<I", raw, 6)
    fps, = struct.unpack_from("<f", raw, 10)
    modality_code, = struct.unpack_from("<B", raw, 14)
    if modality_code >= len(MODALITIES):
        raise FormatError(f"{path}: unknown modality code {modality_code}")
    lang_len, = struct.unpack_from("<H", raw, 15)
    offset = 17
    language = raw[offset:offset + lang_len].decode("utf-8")
    offset += lang_len
    count, = struct.unpack_from("<Q", raw, offset)
    offset += 8
    payload = raw[offset:]
    packed = PackedUnits(bits=payload, count=count,
                         bits_per_unit=bits_per_unit(k))
    stream = UnitStream(units=unpack(packed), fps=float(fps),
                        modality=MODALITIES[modality_code], language=language)
    return stream, int(k)
