"""Multi-ensemble SVD clutter filter over small spatial tiles.

Each non-overlapping roi x roi tile becomes a Casorati matrix (rows are
vectorized tile pixels, columns are frames); dropping its k leading singular
components removes the high-energy, temporally slow content that static
clutter produces, leaving the dynamic residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericError, ParameterError
from .sequence import Sequence


@dataclass(frozen=True)
class SvdFilterConfig:
    roi: int = 5
    drop_count: int = 1

    def __post_init__(self):
        if self.roi < 1:
            raise ParameterError(f"roi must be >= 1, got {self.roi}")
        if self.drop_count < 0:
            raise ParameterError(f"drop count must be >= 0, got {self.drop_count}")


@dataclass
class CasoratiBlock:
    origin: tuple[int, int]
    roi: int
    matrix: np.ndarray  # (roi*roi, F) float64, column f = vectorized tile of frame f


def build_casorati(seq: Sequence, origin: tuple[int, int], roi: int) -> CasoratiBlock:
    r0, c0 = origin
    h, w, f = seq.shape
    if r0 < 0 or c0 < 0 or r0 + roi > h or c0 + roi > w:
        raise DimensionError(f"tile at {origin} with roi {roi} exceeds image {h}x{w}")
    tile = seq.data[r0:r0 + roi, c0:c0 + roi, :]
    matrix = tile.reshape(roi * roi, f).astype(np.float64)
    return CasoratiBlock(origin=(r0, c0), roi=roi, matrix=matrix)


def filter_block(block: CasoratiBlock, k: int) -> np.ndarray:
    """Reconstruction with the k largest singular components zeroed."""
    rows, f = block.matrix.shape
    if not 0 <= k < min(rows, f) + 1:
        raise ParameterError(f"drop count {k} invalid for a {rows}x{f} block")
    if k == 0:
        return block.matrix.copy()
    try:
        u, s, vt = np.linalg.svd(block.matrix, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD failed for block at {block.origin}: {exc}") from exc
    s = s.copy()
    s[:k] = 0.0
    return (u * s) @ vt


def svd_filter_sequence(seq: Sequence, cfg: SvdFilterConfig,
                        report: dict | None = None) -> Sequence:
    """Filter every tile independently and clamp the result into [0, 1].

    Dimensions not divisible by roi are padded with edge replication and
    cropped back; the padding is noted in `report` when one is supplied.
    """
    h, w, f = seq.shape
    if cfg.drop_count >= min(cfg.roi * cfg.roi, f):
        raise ParameterError(f"drop count {cfg.drop_count} too large for "
                             f"roi {cfg.roi} and {f} frames")
    pad_h = (-h) % cfg.roi
    pad_w = (-w) % cfg.roi
    data = seq.data
    if pad_h or pad_w:
        data = np.pad(data, ((0, pad_h), (0, pad_w), (0, 0)), mode="edge")
        if report is not None:
            report["padded"] = [pad_h, pad_w]
    work = Sequence(data)

    out = np.empty_like(data, dtype=np.float64)
    for r0 in range(0, data.shape[0], cfg.roi):
        for c0 in range(0, data.shape[1], cfg.roi):
            block = build_casorati(work, (r0, c0), cfg.roi)
            filtered = filter_block(block, cfg.drop_count)
            out[r0:r0 + cfg.roi, c0:c0 + cfg.roi, :] = \
                filtered.reshape(cfg.roi, cfg.roi, f)
    out = np.clip(out[:h, :w, :], 0.0, 1.0)
    return Sequence(out.astype(np.float32))
