import numpy as np
import pytest
from scipy import linalg as sla

from echoclutter.errors import DimensionError, ParameterError
from echoclutter.sequence import Sequence
from echoclutter.svdfilter import (CasoratiBlock, SvdFilterConfig, build_casorati,
                                   filter_block, svd_filter_sequence)


def _seq(rng, h=10, w=10, f=8):
    return Sequence(rng.random((h, w, f), dtype=np.float32))


def test_build_casorati_layout(rng):
    seq = _seq(rng)
    block = build_casorati(seq, (2, 4), 3)
    assert block.matrix.shape == (9, 8)
    # column f is the row-major vectorization of the tile of frame f
    for f in range(8):
        assert np.array_equal(block.matrix[:, f],
                              seq.data[2:5, 4:7, f].reshape(-1).astype(np.float64))


def test_casorati_constant_sequence_rank1():
    seq = Sequence(np.full((5, 5, 6), 0.4, np.float32))
    block = build_casorati(seq, (0, 0), 5)
    assert np.linalg.matrix_rank(block.matrix) == 1
    assert (block.matrix == block.matrix[0, 0]).all()


def test_casorati_bounds(rng):
    with pytest.raises(DimensionError):
        build_casorati(_seq(rng), (8, 8), 5)


def test_singular_values_match_reference_svd(rng):
    block = build_casorati(_seq(rng), (0, 0), 5)
    mine = np.linalg.svd(block.matrix, compute_uv=False)
    # independent route: LAPACK gesvd via scipy
    ref = sla.svd(block.matrix, compute_uv=False, lapack_driver="gesvd")
    assert np.allclose(mine, ref, rtol=1e-5)


def test_filter_block_k0_identity(rng):
    block = build_casorati(_seq(rng), (0, 0), 5)
    out = filter_block(block, 0)
    assert np.abs(out - block.matrix).max() <= 1e-5


def test_filter_block_rank1_annihilation(rng):
    pattern = rng.random(25)
    m = np.outer(pattern, np.ones(8))
    block = CasoratiBlock(origin=(0, 0), roi=5, matrix=m)
    out = filter_block(block, 1)
    assert np.linalg.norm(out) <= 1e-5 * np.linalg.norm(m)


def test_filter_block_retains_orthogonal_signal(rng):
    f = 12
    p = rng.uniform(0.4, 0.8, 25)
    q = rng.standard_normal(25)
    q -= (q @ p) / (p @ p) * p
    q /= np.linalg.norm(q)
    t = np.cos(2 * np.pi * np.arange(f) / f)
    signal = 0.05 * np.outer(q, t)
    block = CasoratiBlock(origin=(0, 0), roi=5, matrix=np.outer(p, np.ones(f)) + signal)
    out = filter_block(block, 1)
    cos = np.vdot(out, signal) / (np.linalg.norm(out) * np.linalg.norm(signal))
    assert cos >= 0.99


def test_filter_block_bad_k(rng):
    block = build_casorati(_seq(rng, f=4), (0, 0), 2)
    with pytest.raises(ParameterError):
        filter_block(block, 99)


def test_sequence_filter_k0_identity(rng):
    seq = _seq(rng)
    out = svd_filter_sequence(seq, SvdFilterConfig(roi=5, drop_count=0))
    assert np.abs(out.data.astype(np.float64) - seq.data).max() <= 1e-5


def test_sequence_filter_deterministic(rng):
    seq = _seq(rng)
    cfg = SvdFilterConfig(roi=5, drop_count=1)
    a = svd_filter_sequence(seq, cfg)
    b = svd_filter_sequence(seq, cfg)
    assert a == b


def test_sequence_filter_pads_and_crops(rng):
    seq = _seq(rng, h=11, w=13, f=6)
    report = {}
    out = svd_filter_sequence(seq, SvdFilterConfig(roi=5, drop_count=0), report=report)
    assert out.shape == seq.shape
    assert report["padded"] == [4, 2]


def test_energy_never_increases_per_tile(rng):
    seq = _seq(rng)
    cfg = SvdFilterConfig(roi=5, drop_count=2)
    for r0 in range(0, 10, 5):
        for c0 in range(0, 10, 5):
            block = build_casorati(seq, (r0, c0), 5)
            out = filter_block(block, cfg.drop_count)
            assert np.linalg.norm(out) <= np.linalg.norm(block.matrix) + 1e-12


def test_tile_linearity_before_clamp(rng):
    block = build_casorati(_seq(rng), (0, 0), 5)
    out1 = filter_block(block, 1)
    scaled = CasoratiBlock(origin=(0, 0), roi=5, matrix=0.5 * block.matrix)
    out2 = filter_block(scaled, 1)
    assert np.allclose(out2, 0.5 * out1, atol=1e-10)


def test_static_clutter_over_dynamic_phantom_energy_removal(rng):
    # clutter-dominant tiles: bright static pattern + small orthogonal dynamics
    f = 10
    h = w = 10
    data = np.zeros((h, w, f))
    signals = {}
    for r0 in range(0, h, 5):
        for c0 in range(0, w, 5):
            p = rng.uniform(0.4, 0.8, 25)
            q = rng.standard_normal(25)
            q -= (q @ p) / (p @ p) * p
            q /= np.linalg.norm(q)
            t = np.cos(2 * np.pi * np.arange(f) / f)
            tile = np.outer(p, np.ones(f)) + 0.05 * np.outer(q, t)
            data[r0:r0 + 5, c0:c0 + 5, :] = tile.reshape(5, 5, f)
            signals[(r0, c0)] = 0.05 * np.outer(q, t)
    seq = Sequence(np.clip(data, 0, 1).astype(np.float32))
    for (r0, c0), signal in signals.items():
        block = build_casorati(seq, (r0, c0), 5)
        out = filter_block(block, 1)
        # energy along the static-clutter direction drops by >= 99 percent
        before = np.vdot(block.matrix - signal, block.matrix - signal)
        unit = (block.matrix - signal) / np.linalg.norm(block.matrix - signal)
        after = np.vdot(out, unit) ** 2
        assert after <= 0.01 * before
