"""Bit-exact weight file: magic "WGT1", named float32 arrays.

Layout (all integers uint32 little-endian):

    magic "WGT1"
    entry count
    per entry: name length, UTF-8 name, rank, extents, float32 LE values
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError, LengthError

WGT_MAGIC = b"WGT1"
_U32 = struct.Struct("<I")


def save_weights(path, arrays: dict[str, np.ndarray]) -> None:
    chunks = [WGT_MAGIC, _U32.pack(len(arrays))]
    for name, arr in arrays.items():
        data = np.asarray(arr, dtype="<f4")
        if data.ndim:  # ascontiguousarray would promote rank-0 to rank-1
            data = np.ascontiguousarray(data)
        encoded = name.encode("utf-8")
        chunks.append(_U32.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_U32.pack(data.ndim))
        for extent in data.shape:
            chunks.append(_U32.pack(extent))
        chunks.append(data.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_weights(path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != WGT_MAGIC:
        raise FormatError(f"{path}: not a WGT1 weight file")
    pos = 4
    (count,) = _U32.unpack_from(raw, pos)
    pos += 4
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        try:
            (name_len,) = _U32.unpack_from(raw, pos)
            pos += 4
            name = raw[pos:pos + name_len].decode("utf-8")
            pos += name_len
            (rank,) = _U32.unpack_from(raw, pos)
            pos += 4
            shape = []
            for _ in range(rank):
                (extent,) = _U32.unpack_from(raw, pos)
                pos += 4
                shape.append(extent)
            n = int(np.prod(shape)) if shape else 1
            values = np.frombuffer(raw, dtype="<f4", count=n, offset=pos)
            pos += n * 4
        except (struct.error, ValueError) as exc:
            raise LengthError(f"{path}: truncated weight file") from exc
        arrays[name] = values.reshape(shape).copy()
    if pos != len(raw):
        raise LengthError(f"{path}: {len(raw) - pos} trailing bytes")
    return arrays
