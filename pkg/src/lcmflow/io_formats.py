"""Middlebury ``.flo`` reading and writing.

Layout: float32 magic ``202021.25`` ("PIEH"), int32 width, int32 height, then
``height * width`` interleaved ``(u, v)`` float32 pairs, row-major, all
little-endian. Components above ``1e9`` in magnitude mark unknown flow.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from lcmflow.errors import FormatError
from lcmflow.flowfield import FlowField

FLO_MAGIC = 202021.25
UNKNOWN_THRESHOLD = 1e9
UNKNOWN_VALUE = 1e10


def read_flo(path) -> FlowField:
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise FormatError(f"{path}: too short for a .flo header")
    (magic,) = struct.unpack("<f", raw[:4])
    if magic != FLO_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {FLO_MAGIC}")
    width, height = struct.unpack("<ii", raw[4:12])
    if width < 1 or height < 1:
        raise FormatError(f"{path}: invalid dimensions {width}x{height}")
    expected = width * height * 2 * 4
    payload = raw[12:]
    if len(payload) != expected:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype="<f4").reshape(height, width, 2).astype(np.float64)
    u, v = data[..., 0], data[..., 1]
    unknown = ~(np.abs(u) <= UNKNOWN_THRESHOLD) | ~(np.abs(v) <= UNKNOWN_THRESHOLD)
    return FlowField(u, v, ~unknown if unknown.any() else None)


def write_flo(w: FlowField, path) -> None:
    u = w.u.copy()
    v = w.v.copy()
    if w.valid is not None:
        u[~w.valid] = UNKNOWN_VALUE
        v[~w.valid] = UNKNOWN_VALUE
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise ValueError("flow contains non-finite values; mark them invalid instead")
    header = struct.pack("<fii", FLO_MAGIC, w.width, w.height)
    body = np.stack([u, v], axis=-1).astype("<f4").tobytes()
    Path(path).write_bytes(header + body)
