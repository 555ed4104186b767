"""Self-contained verification suite behind the `verify` CLI subcommand.

Each check returns (name, passed, detail) and uses an oracle independent of
the implementation it checks: brute-force window statistics for SSIM,
per-pixel geometry for the sector mask, exhaustive window maxima for
pooling, closed forms for the optimizer and codec.  Key checks accept the
function under test as an argument so a deliberately broken implementation
is observed to fail.
"""

from __future__ import annotations

import math

import numpy as np

from . import metrics
from .clutter import (class_counts, enumerate_pattern_specs, gaussian_patch,
                      time_shift_pair)
from .engine import backend
from .engine.gradcheck import grad_check
from .engine.optim import AdamState, LRSchedulerState, adam_step, lr_plateau_update
from .engine.tensor import (ParamStore, TensorND, batchnorm3d, conv3d, maxpool3d,
                            mse_loss, upsample3d)
from .engine.weights import load_weights, save_weights
from .errors import EchoClutterError, FormatError, LengthError, RangeError
from .geometry import SectorGeometry, default_geometry, sector_mask
from .network import attention_gate_forward
from .phantom import LABEL_CAVITY, LABEL_WALL, PhantomConfig, generate_phantom
from .sequence import Sequence, decode_sequence, encode_sequence
from .svdfilter import CasoratiBlock, SvdFilterConfig, filter_block, svd_filter_sequence


def _check(name, ok, detail=""):
    return (name, bool(ok), detail)


def check_codec_roundtrip(tmpdir) -> tuple:
    rng = np.random.default_rng(11)
    for shape in ((1, 1, 1), (7, 5, 3), (16, 16, 8)):
        seq = Sequence(rng.random(shape, dtype=np.float32))
        path = tmpdir / "seq.stsq"
        encode_sequence(seq, path)
        back = decode_sequence(path)
        if back != seq:
            return _check("codec-roundtrip", False, f"mismatch at shape {shape}")
    tiny = tmpdir / "tiny.stsq"
    encode_sequence(Sequence(np.full((1, 1, 1), 0.5, np.float32)), tiny)
    size = tiny.stat().st_size
    if size != 25:  # 21-byte header + 4 payload bytes
        return _check("codec-roundtrip", False, f"1x1x1 file is {size} bytes")
    return _check("codec-roundtrip", True, "bit-exact, header 21 bytes")


def check_codec_rejections(tmpdir) -> tuple:
    path = tmpdir / "bad.stsq"
    seq = Sequence(np.random.default_rng(0).random((4, 4, 2), dtype=np.float32))
    encode_sequence(seq, path)
    raw = bytearray(path.read_bytes())
    cases = []

    bad_magic = bytes(b"XXXX") + bytes(raw[4:])
    (tmpdir / "m.stsq").write_bytes(bad_magic)
    try:
        decode_sequence(tmpdir / "m.stsq")
        cases.append("magic accepted")
    except FormatError:
        pass

    (tmpdir / "t.stsq").write_bytes(bytes(raw[:-4]))
    try:
        decode_sequence(tmpdir / "t.stsq")
        cases.append("truncation accepted")
    except LengthError as exc:
        if "expected" not in str(exc):
            cases.append("length error lacks byte counts")

    hot = bytearray(raw)
    hot[21:25] = np.array([2.0], "<f4").tobytes()
    (tmpdir / "r.stsq").write_bytes(bytes(hot))
    try:
        decode_sequence(tmpdir / "r.stsq")
        cases.append("out-of-range accepted")
    except RangeError:
        pass
    return _check("codec-rejections", not cases, "; ".join(cases) or "all rejected")


def check_enumeration() -> tuple:
    specs = enumerate_pattern_specs()
    counts = class_counts(specs)
    ids = [s.pattern_id for s in specs]
    again = [s.pattern_id for s in enumerate_pattern_specs()]
    ok = (counts == {"NF": 18, "RL": 324, "NF_RL": 192} and len(specs) == 534
          and ids == list(range(534)) and again == ids)
    return _check("pattern-enumeration", ok,
                  f"counts {counts}, total {len(specs)}")


def check_sector_mask() -> tuple:
    rng = np.random.default_rng(5)
    for _ in range(6):
        h, w = int(rng.integers(8, 40)), int(rng.integers(8, 40))
        geom = SectorGeometry(apex=(float(rng.uniform(0, h / 3)), float(rng.uniform(0, w))),
                              half_angle_deg=float(rng.uniform(10, 80)),
                              radius=float(rng.uniform(4, h + w)))
        mask = sector_mask(geom, h, w)
        for _ in range(200):
            r = int(rng.integers(0, h))
            c = int(rng.integers(0, w))
            dr = r - geom.apex[0]
            dc = c - geom.apex[1]
            inside = (dr >= 0
                      and math.degrees(math.atan2(abs(dc), dr)) <= geom.half_angle_deg
                      and math.hypot(dr, dc) <= geom.radius)
            if bool(mask[r, c]) != inside:
                return _check("sector-mask", False, f"pixel ({r},{c}) of {geom}")
    return _check("sector-mask", True, "matches per-pixel geometric oracle")


def check_phantom() -> tuple:
    cfg = PhantomConfig(geometry=default_geometry(32, 32), speckle_seed=3)
    a = generate_phantom(cfg, 6, seed=9)
    b = generate_phantom(cfg, 6, seed=9)
    if a != b:
        return _check("phantom", False, "not deterministic")
    seq, labels = generate_phantom(cfg, 6, seed=9, return_labels=True)
    sector = sector_mask(cfg.geometry, 32, 32)
    if seq.data[~sector].any():
        return _check("phantom", False, "nonzero pixels outside the sector")
    for f in range(6):
        wall = seq.data[:, :, f][labels[:, :, f] == LABEL_WALL]
        cav = seq.data[:, :, f][labels[:, :, f] == LABEL_CAVITY]
        if wall.size == 0 or cav.size == 0 or wall.mean() <= cav.mean():
            return _check("phantom", False, f"wall/cavity contrast violated at frame {f}")
    return _check("phantom", True, "deterministic, sector-pruned, wall > cavity")


def check_gaussian_patch() -> tuple:
    p = gaussian_patch(20.0, 10.0, 255)
    cr, cc = p.center
    peak = p.values[cr, cc]
    at_sigma = p.values[cr, cc + 10]
    ok = (peak == 1.0
          and abs(at_sigma - math.exp(-0.5)) < 1e-12
          and p.values.shape == (2 * 60 + 1, 2 * 30 + 1)
          and float(np.abs(gaussian_patch(5, 5, 0).values).max()) == 0.0)
    return _check("gaussian-patch", ok, f"peak {peak}, value at sigma_h {at_sigma:.6f}")


def check_gradients() -> tuple:
    rng = np.random.default_rng(21)
    worst = {}

    x = rng.standard_normal((2, 2, 4, 4, 3)).astype(np.float32)
    w = (rng.standard_normal((3, 2, 3, 3, 3)) * 0.3).astype(np.float32)
    b = rng.standard_normal(3).astype(np.float32) * 0.1
    worst["conv3d"] = grad_check(lambda t: conv3d(t[0], t[1], t[2]), [x, w, b], rng=rng)

    g_ = np.ones(2, np.float32) * 1.5
    bt = np.zeros(2, np.float32)

    def bn_fn(t):
        return batchnorm3d(t[0], t[1], t[2], np.zeros(2, np.float32),
                           np.ones(2, np.float32), "train")

    worst["batchnorm3d"] = grad_check(bn_fn, [rng.standard_normal((2, 2, 3, 3, 2)), g_, bt],
                                      rng=rng)

    base = np.arange(2 * 1 * 4 * 4 * 2, dtype=np.float32) * 0.05
    pooled_in = rng.permutation(base).reshape(2, 1, 4, 4, 2)
    worst["maxpool3d"] = grad_check(lambda t: maxpool3d(t[0]), [pooled_in], rng=rng)
    worst["upsample3d"] = grad_check(lambda t: upsample3d(t[0]),
                                     [rng.standard_normal((1, 2, 3, 3, 2))], rng=rng)

    xl = rng.standard_normal((1, 2, 4, 4, 2)).astype(np.float32)
    gg = rng.standard_normal((1, 3, 2, 2, 2)).astype(np.float32)
    wx = rng.standard_normal((2, 2, 1, 1, 1)).astype(np.float32)
    bxg = rng.standard_normal(2).astype(np.float32) * 0.1
    wg = rng.standard_normal((2, 3, 1, 1, 1)).astype(np.float32)
    psi = rng.standard_normal((1, 2, 1, 1, 1)).astype(np.float32)
    bpsi = rng.standard_normal(1).astype(np.float32) * 0.1
    worst["attention"] = grad_check(
        lambda t: attention_gate_forward(t[0], t[1], t[2], t[3], t[4], t[5], t[6])[0],
        [xl, gg, wx, bxg, wg, psi, bpsi], rng=rng)

    a = rng.standard_normal((2, 1, 4, 4, 2))
    bb = rng.standard_normal((2, 1, 4, 4, 2))
    worst["mse"] = grad_check(lambda t: mse_loss(t[0], t[1]), [a, bb], rng=rng)

    bad = {k: v for k, v in worst.items() if v > 1e-3}
    detail = ", ".join(f"{k}={v:.2e}" for k, v in worst.items())
    return _check("gradient-checks", not bad, detail)


def check_pooling_oracle(pool_fn=backend.maxpool3d_forward) -> tuple:
    rng = np.random.default_rng(3)
    # coarse quantization makes within-window ties common, so the
    # first-index tie break is exercised in many windows
    x = (rng.integers(0, 4, size=(2, 2, 6, 4, 3)) / 4.0).astype(np.float32)
    out, idx = pool_fn(x)
    n, c, h, w, f = x.shape
    for ni in range(n):
        for ci in range(c):
            for i in range(h // 2):
                for j in range(w // 2):
                    for fi in range(f):
                        cand = [x[ni, ci, 2 * i + dh, 2 * j + dw, fi]
                                for dh in (0, 1) for dw in (0, 1)]
                        best = max(cand)
                        first = cand.index(best)
                        if out[ni, ci, i, j, fi] != best or idx[ni, ci, i, j, fi] != first:
                            return _check("pooling-oracle", False,
                                          f"window ({ni},{ci},{i},{j},{fi})")
    return _check("pooling-oracle", True, "max and first-index tie break verified")


def check_pool_upsample_identity() -> tuple:
    rng = np.random.default_rng(8)
    up = backend.upsample3d_forward(rng.random((1, 2, 3, 3, 2)).astype(np.float32))
    down, _ = backend.maxpool3d_forward(up)
    again = backend.upsample3d_forward(down)
    return _check("pool-upsample-identity", np.array_equal(up, again),
                  "maxpool after upsample reproduces the tensor")


def check_adam() -> tuple:
    store = ParamStore()
    store.add("p", np.array([1.0], np.float32))
    state = AdamState(store)
    adam_step(store, {"p": np.zeros(1, np.float32)}, state, lr=0.1)
    if store["p"].data[0] != 1.0:
        return _check("adam", False, "zero gradient moved the parameter")
    store2 = ParamStore()
    store2.add("p", np.array([1.0], np.float32))
    adam_step(store2, {"p": np.ones(1, np.float32)}, AdamState(store2), lr=0.1)
    delta = 1.0 - float(store2["p"].data[0])
    ok = abs(delta - 0.1) < 1e-6
    return _check("adam", ok, f"first-step move {delta:.6f}")


def check_plateau() -> tuple:
    state = LRSchedulerState(lr=1e-4)
    trace = []
    for _ in range(13):
        lr_plateau_update(state, 1.0)
        trace.append(state.lr)
    ok = (trace[4] == 1e-5 and trace[8] == 1e-6 and trace[12] == 1e-7
          and min(trace) >= 1e-7)
    return _check("plateau-schedule", ok, f"lr trace tail {trace[-5:]}")


def _bruteforce_ssim(ref: Sequence, test: Sequence, temporal: bool) -> float:
    cfg = metrics.DEFAULT_SSIM
    a = ref.data.astype(np.float64) * 255.0
    b = test.data.astype(np.float64) * 255.0
    n = cfg.window
    g1 = np.exp(-((np.arange(n) - (n - 1) / 2.0) ** 2) / (2 * cfg.gaussian_sigma**2))
    g1 /= g1.sum()
    h, w, f = a.shape
    c1 = (cfg.k1 * 255.0) ** 2
    c2 = (cfg.k2 * 255.0) ** 2
    vals = []
    if temporal:
        nf = min(n, f)
        gf = np.exp(-((np.arange(nf) - (nf - 1) / 2.0) ** 2) / (2 * cfg.gaussian_sigma**2))
        gf /= gf.sum()
        kern = g1[:, None, None] * g1[None, :, None] * gf[None, None, :]
        f_positions = range(f - nf + 1)
    else:
        kern = g1[:, None] * g1[None, :]
        f_positions = range(f)
    for i in range(h - n + 1):
        for j in range(w - n + 1):
            for k in f_positions:
                if temporal:
                    pa = a[i:i + n, j:j + n, k:k + min(n, f)]
                    pb = b[i:i + n, j:j + n, k:k + min(n, f)]
                else:
                    pa = a[i:i + n, j:j + n, k]
                    pb = b[i:i + n, j:j + n, k]
                if not pa.any() and not pb.any():
                    continue
                mu_a = (kern * pa).sum()
                mu_b = (kern * pb).sum()
                var_a = (kern * pa * pa).sum() - mu_a**2
                var_b = (kern * pb * pb).sum() - mu_b**2
                cov = (kern * pa * pb).sum() - mu_a * mu_b
                vals.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                            / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)))
    return float(np.mean(vals))


def check_ssim(ssim2d_fn=metrics.ssim2d, ssim3d_fn=metrics.ssim3d) -> tuple:
    rng = np.random.default_rng(17)
    ref = Sequence(rng.random((14, 14, 12), dtype=np.float32))
    # scale + noise so the luminance and contrast terms both deviate from 1,
    # making the result sensitive to every SSIM constant
    test = Sequence(np.clip(0.55 * ref.data
                            + 0.1 * rng.random((14, 14, 12), dtype=np.float32), 0, 1))
    e2 = abs(ssim2d_fn(ref, test) - _bruteforce_ssim(ref, test, temporal=False))
    e3 = abs(ssim3d_fn(ref, test) - _bruteforce_ssim(ref, test, temporal=True))
    id2 = abs(ssim2d_fn(ref, ref) - 1.0)
    id3 = abs(ssim3d_fn(ref, ref) - 1.0)
    ok = e2 < 1e-6 and e3 < 1e-6 and id2 < 1e-9 and id3 < 1e-9
    return _check("ssim-oracle", ok, f"2d err {e2:.2e}, 3d err {e3:.2e}")


def check_mare() -> tuple:
    rng = np.random.default_rng(2)
    a = Sequence(rng.random((8, 8, 4), dtype=np.float32))
    b = Sequence(np.clip(a.data + 0.07, 0, 1))
    # 0.125 is exact in float32, so its closed form is exact; 0.1 is quantized
    exact = metrics.mare(Sequence(np.zeros((4, 4, 2), np.float32)),
                         Sequence(np.full((4, 4, 2), 0.125, np.float32)))
    flat = metrics.mare(Sequence(np.zeros((4, 4, 2), np.float32)),
                        Sequence(np.full((4, 4, 2), 0.1, np.float32)))
    brute = float(np.mean(np.abs(a.data.astype(np.float64) * 255
                                 - b.data.astype(np.float64) * 255)))
    ok = (metrics.mare(a, a) == 0.0 and exact == 31.875 and abs(flat - 25.5) < 1e-5
          and abs(metrics.mare(a, b) - brute) < 1e-9)
    return _check("mare", ok, f"uniform-0.1 value {flat:.6f}")


def check_svd() -> tuple:
    rng = np.random.default_rng(6)
    f = 16
    p = rng.uniform(0.4, 0.8, 25)
    q = rng.standard_normal(25)
    q -= (q @ p) / (p @ p) * p
    q /= np.linalg.norm(q)
    t = np.cos(2 * np.pi * np.arange(f) / f)
    amp = 0.1
    m = np.outer(p, np.ones(f)) + amp * np.outer(q, t)
    block = CasoratiBlock(origin=(0, 0), roi=5, matrix=m)

    ident = filter_block(block, 0)
    if np.abs(ident - m).max() > 1e-5:
        return _check("svd-oracle", False, "k=0 not the identity")

    filt = filter_block(block, 1)
    signal = amp * np.outer(q, t)
    cos = float(np.vdot(filt, signal) / (np.linalg.norm(filt) * np.linalg.norm(signal)))
    clutter_dir = np.outer(p, np.ones(f))
    clutter_dir /= np.linalg.norm(clutter_dir)
    resid_energy = float(np.vdot(filt, clutter_dir) ** 2 / np.vdot(m, clutter_dir) ** 2)

    static = CasoratiBlock(origin=(0, 0), roi=5, matrix=np.outer(p, np.ones(f)))
    annihilated = np.linalg.norm(filter_block(static, 1)) / np.linalg.norm(static.matrix)

    seq = Sequence(np.clip(m.reshape(5, 5, f), 0, 1).astype(np.float32))
    k0 = svd_filter_sequence(seq, SvdFilterConfig(roi=5, drop_count=0))
    k0_err = float(np.abs(k0.data.astype(np.float64) - seq.data).max())

    ok = cos >= 0.99 and resid_energy <= 0.01 and annihilated <= 1e-5 and k0_err <= 1e-5
    return _check("svd-oracle", ok,
                  f"cos {cos:.4f}, clutter residual {resid_energy:.2e}, "
                  f"rank-1 residual {annihilated:.2e}")


def check_timeshift() -> tuple:
    rng = np.random.default_rng(12)
    a = Sequence(rng.random((4, 4, 8), dtype=np.float32))
    b = Sequence(rng.random((4, 4, 8), dtype=np.float32))
    ia, ib, start = time_shift_pair(a, b, 0.0, seed=5)
    if start != 1 or ia != a or ib != b:
        return _check("time-shift", False, "p=0 shifted the pair")
    for seed in range(5):
        sa, sb, k = time_shift_pair(a, b, 1.0, seed=seed)
        for j in range(8):
            src = (j + k - 1) % 8
            if not np.array_equal(sa.data[:, :, j], a.data[:, :, src]) or \
               not np.array_equal(sb.data[:, :, j], b.data[:, :, src]):
                return _check("time-shift", False, f"index arithmetic broken at k={k}")
    return _check("time-shift", True, "cyclic index arithmetic verified")


def check_weights_roundtrip(tmpdir) -> tuple:
    rng = np.random.default_rng(4)
    arrays = {"a.w": rng.standard_normal((2, 3, 1, 1, 1)).astype(np.float32),
              "b": rng.standard_normal(7).astype(np.float32)}
    path = tmpdir / "w.wgt"
    save_weights(path, arrays)
    back = load_weights(path)
    ok = (list(back) == list(arrays)
          and all(np.array_equal(back[k], arrays[k]) for k in arrays))
    return _check("weights-roundtrip", ok, "bit-exact, order preserved")


def run_all(tmpdir) -> list[tuple]:
    checks = [
        check_codec_roundtrip(tmpdir),
        check_codec_rejections(tmpdir),
        check_enumeration(),
        check_sector_mask(),
        check_phantom(),
        check_gaussian_patch(),
        check_gradients(),
        check_pooling_oracle(),
        check_pool_upsample_identity(),
        check_adam(),
        check_plateau(),
        check_ssim(),
        check_mare(),
        check_svd(),
        check_timeshift(),
        check_weights_roundtrip(tmpdir),
    ]
    return checks
