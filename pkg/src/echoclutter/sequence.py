"""Sequence container, bit-exact binary codec, and dataset manifests.

A sequence is a single-channel spatiotemporal volume of intensities in
[0, 1], held in memory as a float32 array of shape (H, W, F).  On disk it
is stored in a small self-describing container:

    magic   "STSQ"                      4 bytes
    version 1                           1 byte
    H, W, F                             3 x uint32 little-endian
    dtype code 1 (= float32)            uint32 little-endian
    payload                             H*W*F float32 little-endian,
                                        frame-major then row-major

The manifest is a UTF-8 text file, one record per line with tab-separated
fields (id, clean_path, cluttered_path, mask_path, pattern_id,
start_frame_offset); lines starting with '#' are comments.  Paths are
relative to the manifest's directory.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, FormatError, LengthError, RangeError

STSQ_MAGIC = b"STSQ"
STSQ_VERSION = 1
STSQ_DTYPE_FLOAT32 = 1

_HEADER = struct.Struct("<4sBIIII")
HEADER_SIZE = _HEADER.size  # 21 bytes


class Sequence:
    """Spatiotemporal intensity volume with validated invariants."""

    __slots__ = ("data",)

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float32)
        if arr.ndim != 3:
            raise DimensionError(f"sequence data must be 3-D (H, W, F), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise DimensionError(f"sequence dims must all be >= 1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise RangeError("sequence contains non-finite intensities")
        lo = float(arr.min())
        hi = float(arr.max())
        if lo < 0.0 or hi > 1.0:
            raise RangeError(f"intensities must lie in [0, 1], found [{lo:g}, {hi:g}]")
        self.data = np.ascontiguousarray(arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def frames(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, Sequence):
            return NotImplemented
        return self.shape == other.shape and self.data.tobytes() == other.data.tobytes()

    def __repr__(self) -> str:
        return f"Sequence({self.height}x{self.width}x{self.frames})"


def encode_sequence(seq: Sequence, path) -> None:
    """Write a sequence to `path` in the STSQ container, bit-exactly."""
    if not isinstance(seq, Sequence):
        raise TypeError("encode_sequence expects a Sequence")
    h, w, f = seq.shape
    if min(h, w, f) < 1:
        raise DimensionError(f"refusing to encode degenerate dims {seq.shape}")
    header = _HEADER.pack(STSQ_MAGIC, STSQ_VERSION, h, w, f, STSQ_DTYPE_FLOAT32)
    # frame-major then row-major payload
    payload = np.ascontiguousarray(np.moveaxis(seq.data, 2, 0), dtype="<f4").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise OSError(f"failed writing sequence to {path}: {exc}") from exc


def decode_sequence(path) -> Sequence:
    """Read and validate a sequence from an STSQ container."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise OSError(f"failed reading sequence from {path}: {exc}") from exc

    if len(raw) < HEADER_SIZE:
        raise LengthError(f"{path}: file too short for header "
                          f"(expected >= {HEADER_SIZE} bytes, got {len(raw)})")
    magic, version, h, w, f, dtype_code = _HEADER.unpack_from(raw, 0)
    if magic != STSQ_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {STSQ_MAGIC!r}")
    if version != STSQ_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dtype_code != STSQ_DTYPE_FLOAT32:
        raise FormatError(f"{path}: unsupported dtype code {dtype_code}")
    if min(h, w, f) < 1:
        raise FormatError(f"{path}: degenerate dims ({h}, {w}, {f})")

    expected = HEADER_SIZE + h * w * f * 4
    if len(raw) != expected:
        raise LengthError(f"{path}: payload length mismatch "
                          f"(expected {expected} bytes, got {len(raw)})")
    flat = np.frombuffer(raw, dtype="<f4", offset=HEADER_SIZE)
    data = np.moveaxis(flat.reshape(f, h, w), 0, 2)
    return Sequence(data)  # constructor re-checks range/finiteness


@dataclass
class ManifestRecord:
    id: str
    clean_path: str
    cluttered_path: str
    mask_path: str
    pattern_id: int
    start_frame_offset: int

    @property
    def split(self) -> str:
        """Group tag encoded as the id prefix before '/'; 'train' if absent."""
        if "/" in self.id:
            return self.id.split("/", 1)[0]
        return "train"

    def file_stem(self) -> str:
        return self.id.replace("/", "_")


@dataclass
class DatasetManifest:
    records: list[ManifestRecord]
    root: Path | None = None

    def __post_init__(self):
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DataError(f"duplicate manifest ids: {dupes}")

    def __len__(self) -> int:
        return len(self.records)

    def resolve(self, rel_path: str) -> Path:
        base = self.root if self.root is not None else Path(".")
        return base / rel_path

    def save(self, path) -> None:
        path = Path(path)
        lines = ["# id\tclean\tcluttered\tmask\tpattern_id\tstart_frame_offset"]
        for r in self.records:
            lines.append(f"{r.id}\t{r.clean_path}\t{r.cluttered_path}\t{r.mask_path}"
                         f"\t{r.pattern_id}\t{r.start_frame_offset}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        records = []
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 6:
                raise FormatError(f"{path}:{lineno}: expected 6 tab-separated fields, "
                                  f"got {len(parts)}")
            try:
                rec = ManifestRecord(parts[0], parts[1], parts[2], parts[3],
                                     int(parts[4]), int(parts[5]))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            records.append(rec)
        return cls(records, root=path.parent)

    def validate_files(self) -> None:
        """Check that every referenced file decodes to consistently shaped sequences."""
        for r in self.records:
            shapes = []
            for p in (r.clean_path, r.cluttered_path, r.mask_path):
                shapes.append(decode_sequence(self.resolve(p)).shape)
            if len(set(shapes)) != 1:
                raise DataError(f"record {r.id}: inconsistent shapes {shapes}")
