"""MARE and windowed structural similarity (2D per frame, 3D over space-time).

All statistics use Gaussian-weighted sliding windows (stride 1, valid
placement only) on intensities scaled to [0, 255], with the usual stability
constants C1 = (K1 L)^2 and C2 = (K2 L)^2.  A window position is excluded
when reference and test patches are both entirely zero; this drops the
blank corners outside the sector field of view.  The 3D index additionally
windows over frames, so temporal incoherence lowers it while leaving the
2D index untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

from .clutter import pattern_class
from .errors import (DataError, DimensionError, ParameterError, UndefinedMetricError)
from .sequence import DatasetManifest, Sequence, decode_sequence


@dataclass(frozen=True)
class SsimConfig:
    window: int = 11
    stride: int = 1
    gaussian_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 255.0

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ParameterError(f"window must be odd and positive, got {self.window}")
        if self.stride != 1:
            raise ParameterError("only stride 1 is supported")
        if min(self.gaussian_sigma, self.k1, self.k2, self.data_range) <= 0:
            raise ParameterError("SSIM constants must be positive")


DEFAULT_SSIM = SsimConfig()


def mare(reference: Sequence, test: Sequence) -> float:
    """Mean absolute difference after scaling intensities to [0, 255]."""
    if reference.shape != test.shape:
        raise DimensionError(f"shape mismatch: {reference.shape} vs {test.shape}")
    a = reference.data.astype(np.float64) * 255.0
    b = test.data.astype(np.float64) * 255.0
    return float(np.abs(a - b).mean())


def _gaussian_window(n: int, sigma: float) -> np.ndarray:
    d = np.arange(n, dtype=np.float64) - (n - 1) / 2.0
    w = np.exp(-(d**2) / (2.0 * sigma**2))
    return w / w.sum()


def _ssim_mean(reference: Sequence, test: Sequence, cfg: SsimConfig,
               sector: np.ndarray | None, temporal: bool) -> float:
    if reference.shape != test.shape:
        raise DimensionError(f"shape mismatch: {reference.shape} vs {test.shape}")
    h, w, f = reference.shape
    r = cfg.window // 2
    if h < cfg.window or w < cfg.window:
        raise DimensionError(f"window {cfg.window} does not fit a {h}x{w} frame")

    a = reference.data.astype(np.float64) * cfg.data_range
    b = test.data.astype(np.float64) * cfg.data_range
    g = _gaussian_window(cfg.window, cfg.gaussian_sigma)
    ones = np.ones(cfg.window, dtype=np.float64)
    if temporal:
        nf = min(cfg.window, f)  # window shrinks to F for short sequences
        gf = _gaussian_window(nf, cfg.gaussian_sigma)
        ones_f = np.ones(nf, dtype=np.float64)
        slide_f = f >= cfg.window

    def windowed(vol: np.ndarray, kern: np.ndarray, kern_f) -> np.ndarray:
        y = correlate1d(vol, kern, axis=0, mode="constant")[r:h - r]
        y = correlate1d(y, kern, axis=1, mode="constant")[:, r:w - r]
        if not temporal:
            return y
        if slide_f:
            rf = cfg.window // 2
            return correlate1d(y, kern_f, axis=2, mode="constant")[:, :, rf:f - rf]
        return np.tensordot(y, kern_f, axes=([2], [0]))[:, :, None]

    kf = gf if temporal else None
    mu_a = windowed(a, g, kf)
    mu_b = windowed(b, g, kf)
    var_a = windowed(a * a, g, kf) - mu_a * mu_a
    var_b = windowed(b * b, g, kf) - mu_b * mu_b
    cov = windowed(a * b, g, kf) - mu_a * mu_b

    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2
    ssim_map = (((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)))

    kcf = ones_f if temporal else None
    cnt_a = windowed((reference.data != 0).astype(np.float64), ones, kcf)
    cnt_b = windowed((test.data != 0).astype(np.float64), ones, kcf)
    include = (cnt_a > 0.5) | (cnt_b > 0.5)
    if sector is not None:
        sec = np.broadcast_to(np.asarray(sector, dtype=np.float64)[:, :, None],
                              reference.shape)
        include &= windowed(np.ascontiguousarray(sec), ones, kcf) > 0.5
    if not include.any():
        raise UndefinedMetricError("every window position was excluded")
    return float(ssim_map[include].mean())


def ssim2d(reference: Sequence, test: Sequence, cfg: SsimConfig = DEFAULT_SSIM,
           sector: np.ndarray | None = None) -> float:
    """Mean SSIM over all included 2D windows of all frames."""
    return _ssim_mean(reference, test, cfg, sector, temporal=False)


def ssim3d(reference: Sequence, test: Sequence, cfg: SsimConfig = DEFAULT_SSIM,
           sector: np.ndarray | None = None) -> float:
    """Mean SSIM over included space-time windows (spatiotemporal coherence)."""
    return _ssim_mean(reference, test, cfg, sector, temporal=True)


@dataclass
class EvalRow:
    id: str
    clutter_class: str
    mare: float
    ssim2d: float
    ssim3d: float


@dataclass
class EvalReport:
    filter_name: str
    config_digest: str
    rows: list[EvalRow]
    aggregates: dict
    notes: dict | None = None

    def to_json_dict(self) -> dict:
        out = {
            "filter": self.filter_name,
            "config_digest": self.config_digest,
            "rows": [{"id": r.id, "class": r.clutter_class, "mare": r.mare,
                      "ssim2d": r.ssim2d, "ssim3d": r.ssim3d} for r in self.rows],
            "aggregates": self.aggregates,
        }
        if self.notes:
            out["notes"] = self.notes
        return out

    def save(self, path, force: bool = False) -> None:
        path = Path(path)
        if path.exists() and not force:
            raise DataError(f"report {path} exists; pass force to overwrite")
        path.write_text(json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n",
                        encoding="utf-8")


def aggregate_rows(rows: list[EvalRow]) -> dict:
    out: dict = {}
    for cls in sorted({r.clutter_class for r in rows}):
        sub = [r for r in rows if r.clutter_class == cls]
        out[cls] = {}
        for metric in ("mare", "ssim2d", "ssim3d"):
            vals = np.array([getattr(r, metric) for r in sub], dtype=np.float64)
            out[cls][metric] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return out


def evaluate(manifest: DatasetManifest, predictions_dir, cfg: SsimConfig = DEFAULT_SSIM,
             filter_name: str = "", config_digest: str = "") -> EvalReport:
    """Score every manifest record against its prediction file.

    Predictions are `<id with '/' replaced by '_'>.stsq` inside
    `predictions_dir`.  Raises with the full list of missing ids if any
    prediction is absent.
    """
    predictions_dir = Path(predictions_dir)
    missing = [rec.id for rec in manifest.records
               if not (predictions_dir / f"{rec.file_stem()}.stsq").exists()]
    if missing:
        raise DataError(f"missing predictions for {len(missing)} ids: {missing}")

    rows = []
    notes: dict = {}
    for rec in sorted(manifest.records, key=lambda r: r.id):
        clean = decode_sequence(manifest.resolve(rec.clean_path))
        pred = decode_sequence(predictions_dir / f"{rec.file_stem()}.stsq")
        if clean.frames < cfg.window:
            notes["ssim3d_window"] = clean.frames  # shrunk temporal window
        rows.append(EvalRow(
            id=rec.id,
            clutter_class=pattern_class(rec.pattern_id),
            mare=mare(clean, pred),
            ssim2d=ssim2d(clean, pred, cfg),
            ssim3d=ssim3d(clean, pred, cfg),
        ))
    return EvalReport(filter_name=filter_name, config_digest=config_digest,
                      rows=rows, aggregates=aggregate_rows(rows),
                      notes=notes or None)
