"""Command-line pipeline: simulate, train, filter, eval, verify.

Exit codes: 0 success, 1 usage, 2 data error, 3 verification failure.
Every run prints a digest of the resolved configuration; all randomness is
a pure function of --seed, so repeated runs are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .clutter import (CLASS_NF, CLASS_NF_RL, CLASS_RL, DEFAULT_SIM_CONFIG, SimConfig,
                      enumerate_pattern_specs, place_nf, place_rl,
                      render_clutter_volume, superimpose)
from .engine import backend
from .engine.weights import load_weights, save_weights
from .errors import DataError, EchoClutterError
from .geometry import default_geometry
from .losses import build_perceptual_net
from .metrics import EvalReport, evaluate
from .network import (FilterNet, NetConfig, build_network, dump_attention,
                      filter_sequence)
from .phantom import PhantomConfig, generate_phantom
from .sequence import (DatasetManifest, ManifestRecord, Sequence, decode_sequence,
                       encode_sequence)
from .svdfilter import SvdFilterConfig, svd_filter_sequence
from .training import TrainConfig, pretrain_perceptual, train
from .verify import run_all

_CLASS_FLAGS = {"nf": CLASS_NF, "rl": CLASS_RL, "nfrl": CLASS_NF_RL, "all": None}

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _digest(args: argparse.Namespace) -> str:
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    blob = json.dumps(resolved, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _derive_seed(seed: int, *components: int) -> int:
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1)] + [int(c) for c in components])
    return int(ss.generate_state(1, np.uint64)[0])


def _select_patterns(specs, class_flag: str, limit: int | None):
    wanted = _CLASS_FLAGS[class_flag]
    pool = [s for s in specs if wanted is None or s.clutter_class == wanted]
    if limit is None or limit <= 0 or limit >= len(pool):
        return pool
    idx = np.unique(np.round(np.linspace(0, len(pool) - 1, limit)).astype(int))
    return [pool[i] for i in idx]


def cmd_simulate(args) -> int:
    out = Path(args.out)
    data_dir = out / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    sim = SimConfig.load(args.config) if args.config else DEFAULT_SIM_CONFIG
    cal = sim.calibration()
    geom = default_geometry(args.height, args.width)
    specs = _select_patterns(enumerate_pattern_specs(sim), args.classes, args.limit)
    if not specs:
        raise DataError("no patterns selected")

    n = len(specs)
    n_val = int(round(args.val_frac * n))
    assign_rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([int(args.seed) & (2**64 - 1), 0xA55])))
    val_idx = set(assign_rng.choice(n, size=n_val, replace=False).tolist()) if n_val else set()

    records = []
    for i, spec in enumerate(specs):
        phantom_cfg = PhantomConfig(
            geometry=geom,
            speckle_seed=_derive_seed(args.seed, spec.pattern_id, i, 1),
            cycle_frames=args.frames)
        clean = generate_phantom(phantom_cfg, args.frames,
                                 seed=_derive_seed(args.seed, spec.pattern_id, i, 2))
        h, w, _ = clean.shape
        volume = np.zeros((h, w, args.frames), dtype=np.float64)
        if spec.nf is not None:
            placed = place_nf(spec, geom, args.frames, (h, w),
                              seed=_derive_seed(args.seed, spec.pattern_id, i, 3),
                              config=sim)
            volume += render_clutter_volume(placed, h, w, args.frames)
        if spec.rl is not None:
            placed = place_rl(spec, geom, cal, args.frames, (h, w),
                              seed=_derive_seed(args.seed, spec.pattern_id, i, 4),
                              config=sim)
            volume += render_clutter_volume(placed, h, w, args.frames)
        cluttered, mask = superimpose(clean, volume, geom, sim.mask_threshold)

        split = "val" if i in val_idx else "train"
        rec_id = f"{split}/r{i:03d}_p{spec.pattern_id:03d}"
        stem = rec_id.replace("/", "_")
        encode_sequence(clean, data_dir / f"{stem}_clean.stsq")
        encode_sequence(cluttered, data_dir / f"{stem}_clut.stsq")
        encode_sequence(Sequence(mask.astype(np.float32)), data_dir / f"{stem}_mask.stsq")
        records.append(ManifestRecord(
            id=rec_id,
            clean_path=f"data/{stem}_clean.stsq",
            cluttered_path=f"data/{stem}_clut.stsq",
            mask_path=f"data/{stem}_mask.stsq",
            pattern_id=spec.pattern_id,
            start_frame_offset=0))

    manifest = DatasetManifest(records, root=out)
    manifest.save(out / "manifest.tsv")
    print(f"wrote {len(records)} records to {out / 'manifest.tsv'}")
    return EXIT_OK


def _net_config_from_args(args) -> NetConfig:
    return NetConfig(levels=args.levels,
                     base_channels=args.base_channels,
                     use_attention=not args.no_attention,
                     use_residual_skip=not args.no_residual,
                     temporal_kernels=(args.net == "3d"),
                     dropout_rate=args.dropout)


def _save_net(path: Path, net: FilterNet) -> None:
    save_weights(path, net.params.state_arrays())
    cfg = net.config
    sidecar = {"levels": cfg.levels, "base_channels": cfg.base_channels,
               "use_attention": cfg.use_attention,
               "use_residual_skip": cfg.use_residual_skip,
               "temporal_kernels": cfg.temporal_kernels,
               "dropout_rate": cfg.dropout_rate}
    Path(str(path) + ".json").write_text(json.dumps(sidecar, sort_keys=True, indent=2) + "\n",
                                         encoding="utf-8")


def load_net(path) -> FilterNet:
    sidecar = Path(str(path) + ".json")
    if not sidecar.exists():
        raise DataError(f"missing network config sidecar {sidecar}")
    cfg = NetConfig(**json.loads(sidecar.read_text(encoding="utf-8")))
    net = build_network(cfg, seed=0)
    net.params.load_state(load_weights(path))
    return net


def cmd_train(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    net_cfg = _net_config_from_args(args)
    net = build_network(net_cfg, seed=_derive_seed(args.seed, 11))
    train_cfg = TrainConfig(loss_kind=args.loss, epochs=args.epochs, lr=args.lr,
                            batch_size=args.batch, lambda_rec=args.lambda_rec,
                            lambda_adv=args.lambda_adv, lambda_prc=args.lambda_prc,
                            seed=_derive_seed(args.seed, 12))
    disc = None
    pnet = None
    if args.loss == "rec_adv":
        from .losses import build_discriminator
        disc = build_discriminator(seed=_derive_seed(args.seed, 13),
                                   temporal_kernels=net_cfg.temporal_kernels)
    elif args.loss == "rec_prc":
        pnet = build_perceptual_net(base_channels=args.base_channels,
                                    levels=max(2, args.levels),
                                    seed=_derive_seed(args.seed, 14),
                                    temporal_kernels=net_cfg.temporal_kernels)
        pretrain_perceptual(pnet, manifest, epochs=args.perceptual_epochs,
                            seed=_derive_seed(args.seed, 15))

    def progress(row):
        print(f"epoch {row.epoch:3d}  train {row.train_loss:.6f}  "
              f"val {row.val_loss:.6f}  lr {row.lr:g}")

    log, _ = train(net, manifest, train_cfg, disc=disc, pnet=pnet, progress=progress)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _save_net(out, net)
    if args.log:
        log.save_csv(args.log)
    print(f"best epoch {log.best_epoch}; weights saved to {out} "
          f"({net.n_parameters()} parameters)")
    return EXIT_OK


def cmd_filter(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    net = None
    svd_cfg = None
    if args.svd:
        svd_cfg = SvdFilterConfig(roi=args.roi, drop_count=args.drop)
    else:
        if not args.weights:
            raise DataError("provide --weights or --svd")
        net = load_net(args.weights)

    timings = []
    for rec in manifest.records:
        cluttered = decode_sequence(manifest.resolve(rec.cluttered_path))
        note = {}
        t0 = time.perf_counter()
        if svd_cfg is not None:
            filtered = svd_filter_sequence(cluttered, svd_cfg, report=note)
        else:
            filtered = filter_sequence(net, cluttered)
        seconds = time.perf_counter() - t0
        encode_sequence(filtered, out / f"{rec.file_stem()}.stsq")
        entry = {"id": rec.id, "seconds": seconds}
        entry.update(note)
        timings.append(entry)
        if args.attention_out and net is not None and net.config.use_attention:
            att_dir = Path(args.attention_out) / rec.file_stem()
            att_dir.mkdir(parents=True, exist_ok=True)
            for scale, (q_seq, alpha_seq) in dump_attention(net, cluttered).items():
                encode_sequence(q_seq, att_dir / f"scale{scale}_intermediate.stsq")
                encode_sequence(alpha_seq, att_dir / f"scale{scale}_final.stsq")

    if args.report:
        name = "svd" if svd_cfg is not None else "deep"
        Path(args.report).write_text(
            json.dumps({"filter": name, "sequences": timings}, sort_keys=True, indent=2) + "\n",
            encoding="utf-8")
    print(f"filtered {len(manifest.records)} sequences into {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    manifest = DatasetManifest.load(args.manifest)
    report = evaluate(manifest, args.pred, filter_name=args.filter_name,
                      config_digest=_digest(args))
    report.save(args.report, force=args.force)
    print(f"report written to {args.report} ({len(report.rows)} rows)")
    return EXIT_OK


def cmd_verify(args) -> int:
    with tempfile.TemporaryDirectory() as tmp:
        results = run_all(Path(tmp))
    failures = 0
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        print(f"{status}  {name:24s} {detail}")
        if not ok:
            failures += 1
    print(f"{len(results) - failures}/{len(results)} checks passed "
          f"(backend: {backend.BACKEND_NAME})")
    return EXIT_OK if failures == 0 else EXIT_VERIFY


def build_parser() -> _Parser:
    parser = _Parser(prog="echoclutter",
                     description="Clutter simulation, deep/SVD filtering, and evaluation "
                                 "for echo-like image sequences")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a clean/cluttered/mask dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", choices=sorted(_CLASS_FLAGS), default="all")
    p.add_argument("--limit", type=int, default=None,
                   help="number of patterns (evenly spaced over the selection)")
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--frames", type=int, default=50)
    p.add_argument("--val-frac", type=float, default=0.25)
    p.add_argument("--config", default=None, help="simulation config file (key = value)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train the filtering network")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="weight file to write")
    p.add_argument("--log", default=None, help="CSV training log path")
    p.add_argument("--loss", choices=("rec", "rec_adv", "rec_prc"), default="rec")
    p.add_argument("--net", choices=("3d", "2d"), default="3d")
    p.add_argument("--levels", type=int, default=2)
    p.add_argument("--base-channels", type=int, default=8)
    p.add_argument("--no-attention", action="store_true")
    p.add_argument("--no-residual", action="store_true")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--dropout", type=float, default=0.05)
    p.add_argument("--lambda-rec", type=float, default=1.0)
    p.add_argument("--lambda-adv", type=float, default=0.01)
    p.add_argument("--lambda-prc", type=float, default=0.1)
    p.add_argument("--perceptual-epochs", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("filter", help="filter every manifest sequence")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--weights", default=None)
    p.add_argument("--svd", action="store_true")
    p.add_argument("--roi", type=int, default=5)
    p.add_argument("--drop", type=int, default=1)
    p.add_argument("--attention-out", default=None)
    p.add_argument("--report", default=None, help="JSON timing report")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("eval", help="score predictions against clean references")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--filter-name", default="")
    p.add_argument("--force", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify", help="run the property and oracle suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    print(f"config digest: {_digest(args)} (backend: {backend.BACKEND_NAME})")
    try:
        return args.func(args)
    except EchoClutterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
