"""Shared fixtures.  Thread pinning must happen before numpy loads so the
timed acceptance criteria genuinely run on one core."""

import os

for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

from pathlib import Path

import numpy as np
import pytest

from echoclutter.clutter import (enumerate_pattern_specs, place_nf, place_rl,
                                 render_clutter_volume, superimpose)
from echoclutter.geometry import DEFAULT_CALIBRATION, default_geometry
from echoclutter.phantom import PhantomConfig, generate_phantom
from echoclutter.sequence import (DatasetManifest, ManifestRecord, Sequence,
                                  encode_sequence)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def make_dataset(out: Path, n: int = 8, size=(32, 32, 8), val_frac: float = 0.25,
                 seed: int = 0, classes=None) -> DatasetManifest:
    """Small clean/cluttered/mask dataset mirroring the CLI simulate layout."""
    h, w, f = size
    geom = default_geometry(h, w)
    specs = enumerate_pattern_specs()
    if classes is not None:
        specs = [s for s in specs if s.clutter_class in classes]
    idx = np.unique(np.round(np.linspace(0, len(specs) - 1, n)).astype(int))
    chosen = [specs[i] for i in idx]
    rng_ = np.random.default_rng(seed)
    n_val = int(round(val_frac * len(chosen)))
    val_idx = set(rng_.choice(len(chosen), size=n_val, replace=False).tolist())

    data_dir = out / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i, spec in enumerate(chosen):
        cfg = PhantomConfig(geometry=geom, speckle_seed=seed + i, cycle_frames=f)
        clean = generate_phantom(cfg, f, seed=seed * 1000 + i)
        volume = np.zeros((h, w, f), dtype=np.float64)
        if spec.nf is not None:
            volume += render_clutter_volume(
                place_nf(spec, geom, f, (h, w), seed=seed + 10 * i), h, w, f)
        if spec.rl is not None:
            volume += render_clutter_volume(
                place_rl(spec, geom, DEFAULT_CALIBRATION, f, (h, w), seed=seed + 10 * i + 5),
                h, w, f)
        cluttered, mask = superimpose(clean, volume, geom)
        split = "val" if i in val_idx else "train"
        rec_id = f"{split}/r{i:03d}_p{spec.pattern_id:03d}"
        stem = rec_id.replace("/", "_")
        encode_sequence(clean, data_dir / f"{stem}_clean.stsq")
        encode_sequence(cluttered, data_dir / f"{stem}_clut.stsq")
        encode_sequence(Sequence(mask.astype(np.float32)), data_dir / f"{stem}_mask.stsq")
        records.append(ManifestRecord(rec_id, f"data/{stem}_clean.stsq",
                                      f"data/{stem}_clut.stsq", f"data/{stem}_mask.stsq",
                                      spec.pattern_id, 0))
    manifest = DatasetManifest(records, root=out)
    manifest.save(out / "manifest.tsv")
    return manifest


@pytest.fixture()
def tiny_dataset(tmp_path):
    return make_dataset(tmp_path / "ds", n=8, size=(32, 32, 8), seed=3)
