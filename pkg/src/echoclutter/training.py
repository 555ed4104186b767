"""Training loop: augmentation, Adam, plateau schedule, best-checkpoint logic."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clutter import time_shift_pair
from .engine.optim import AdamState, LRSchedulerState, adam_step, lr_plateau_update
from .engine.tensor import TensorND, mse_loss, mul, no_grad
from .errors import ContractError, ParameterError
from .losses import Discriminator, PerceptualNet, loss_adversarial, loss_perceptual
from .network import FilterNet, batch_from_sequences
from .sequence import DatasetManifest, Sequence, decode_sequence

LOSS_KINDS = ("rec", "rec_adv", "rec_prc")


@dataclass
class TrainConfig:
    loss_kind: str = "rec"
    lambda_rec: float = 1.0
    lambda_adv: float = 0.01
    lambda_prc: float = 0.1
    epochs: int = 20
    lr: float = 1e-4
    batch_size: int = 2
    shift_probability: float = 0.5
    scheduler_factor: float = 0.1
    scheduler_patience: int = 4
    min_lr: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise ParameterError(f"loss kind must be one of {LOSS_KINDS}, got {self.loss_kind!r}")
        if min(self.lambda_rec, self.lambda_adv, self.lambda_prc) < 0:
            raise ParameterError("loss weights must be non-negative")
        if self.loss_kind == "rec":
            self.lambda_adv = 0.0
            self.lambda_prc = 0.0
        if self.epochs < 1 or self.batch_size < 1:
            raise ParameterError("epochs and batch size must be >= 1")


@dataclass
class LogRow:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class TrainLog:
    rows: list[LogRow] = field(default_factory=list)
    best_epoch: int = -1

    def save_csv(self, path) -> None:
        lines = ["epoch,train_loss,val_loss,lr"]
        for r in self.rows:
            lines.append(f"{r.epoch},{r.train_loss!r},{r.val_loss!r},{r.lr!r}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class _Pair:
    record_id: str
    pattern_id: int
    cluttered: Sequence
    clean: Sequence
    mask: np.ndarray


def load_pairs(manifest: DatasetManifest, records=None) -> list[_Pair]:
    pairs = []
    for rec in (records if records is not None else manifest.records):
        cluttered = decode_sequence(manifest.resolve(rec.cluttered_path))
        clean = decode_sequence(manifest.resolve(rec.clean_path))
        mask = decode_sequence(manifest.resolve(rec.mask_path)).data > 0.5
        if rec.start_frame_offset:
            shift = -(rec.start_frame_offset % cluttered.frames)
            cluttered = Sequence(np.roll(cluttered.data, shift, axis=2))
            clean = Sequence(np.roll(clean.data, shift, axis=2))
            mask = np.roll(mask, shift, axis=2)
        pairs.append(_Pair(rec.id, rec.pattern_id, cluttered, clean, mask))
    return pairs


def split_records(manifest: DatasetManifest):
    train = [r for r in manifest.records if r.split != "val"]
    val = [r for r in manifest.records if r.split == "val"]
    return train, val


def _epoch_batches(order: np.ndarray, batch_size: int):
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]


def _validation_loss(net: FilterNet, pairs: list[_Pair], batch_size: int) -> float:
    total = 0.0
    count = 0
    with no_grad():
        for start in range(0, len(pairs), batch_size):
            chunk = pairs[start:start + batch_size]
            x = TensorND(batch_from_sequences([p.cluttered for p in chunk]))
            t = TensorND(batch_from_sequences([p.clean for p in chunk]))
            out = net.forward(x, mode="eval")
            total += mse_loss(out, t).item() * len(chunk)
            count += len(chunk)
    return total / count


def train(net: FilterNet, manifest: DatasetManifest, cfg: TrainConfig,
          disc: Discriminator | None = None, pnet: PerceptualNet | None = None,
          progress=None) -> tuple[TrainLog, dict[str, np.ndarray]]:
    """Train in place; returns the log and the best-validation weight arrays.

    The manifest is split by id prefix: records whose id starts with "val/"
    form the validation set.  The network is left loaded with the best
    checkpoint when training finishes.
    """
    train_recs, val_recs = split_records(manifest)
    if not train_recs or not val_recs:
        raise ContractError(f"need non-empty train and val splits, got "
                            f"{len(train_recs)}/{len(val_recs)}")
    if cfg.loss_kind == "rec_adv" and disc is None:
        raise ContractError("rec_adv training requires a discriminator")
    if cfg.loss_kind == "rec_prc" and pnet is None:
        raise ContractError("rec_prc training requires a perceptual network")

    train_pairs = load_pairs(manifest, train_recs)
    val_pairs = load_pairs(manifest, val_recs)

    root = np.random.SeedSequence(int(cfg.seed) & (2**64 - 1))
    shuffle_ss, shift_ss, drop_ss, disc_ss = root.spawn(4)
    shuffle_rng = np.random.Generator(np.random.PCG64(shuffle_ss))
    shift_seed_rng = np.random.Generator(np.random.PCG64(shift_ss))
    drop_rng = np.random.Generator(np.random.PCG64(drop_ss))

    opt = AdamState(net.params)
    disc_opt = AdamState(disc.params) if disc is not None else None
    sched = LRSchedulerState(lr=cfg.lr, factor=cfg.scheduler_factor,
                             patience=cfg.scheduler_patience, min_lr=cfg.min_lr)

    log = TrainLog()
    best_val = np.inf
    best_arrays: dict[str, np.ndarray] = net.params.state_arrays()

    for epoch in range(1, cfg.epochs + 1):
        lr_used = sched.lr
        order = shuffle_rng.permutation(len(train_pairs))
        epoch_loss = 0.0
        seen = 0
        for batch in _epoch_batches(order, cfg.batch_size):
            xs, ts, ms = [], [], []
            for j in batch:
                pair = train_pairs[j]
                seed = int(shift_seed_rng.integers(0, 2**63))
                inp, tgt, start = time_shift_pair(pair.cluttered, pair.clean,
                                                  cfg.shift_probability, seed)
                xs.append(inp)
                ts.append(tgt)
                ms.append(np.roll(pair.mask, -(start - 1), axis=2))
            x = TensorND(batch_from_sequences(xs))
            t = TensorND(batch_from_sequences(ts))

            net.params.zero_grad()
            if disc is not None:
                disc.params.zero_grad()
            out = net.forward(x, mode="train", rng=drop_rng)
            rec = mse_loss(out, t)
            total = mul(rec, cfg.lambda_rec)
            disc_term = None
            if cfg.loss_kind == "rec_adv":
                mask = np.stack(ms)[:, None]
                gen_term, disc_term = loss_adversarial(out, t, mask, disc, mode="train")
                total = total + mul(gen_term, cfg.lambda_adv)
            elif cfg.loss_kind == "rec_prc":
                total = total + mul(loss_perceptual(out, t, pnet), cfg.lambda_prc)
            total.backward()
            adam_step(net.params, net.params.gradients(), opt, lr_used)

            if disc_term is not None:
                disc.params.zero_grad()
                disc_term.backward()
                adam_step(disc.params, disc.params.gradients(), disc_opt, lr_used)

            epoch_loss += total.item() * len(batch)
            seen += len(batch)

        val_loss = _validation_loss(net, val_pairs, cfg.batch_size)
        row = LogRow(epoch=epoch, train_loss=epoch_loss / seen,
                     val_loss=val_loss, lr=lr_used)
        log.rows.append(row)
        if progress is not None:
            progress(row)
        if val_loss < best_val:
            best_val = val_loss
            best_arrays = net.params.state_arrays()
            log.best_epoch = epoch
        lr_plateau_update(sched, val_loss)

    net.params.load_state(best_arrays)
    return log, best_arrays


def pretrain_perceptual(pnet: PerceptualNet, manifest: DatasetManifest,
                        epochs: int = 3, lr: float = 1e-4, batch_size: int = 2,
                        seed: int = 0) -> None:
    """Teach the perceptual autoencoder to reconstruct clean sequences, then freeze it."""
    train_recs, _ = split_records(manifest)
    if not train_recs:
        raise ContractError("no training records for perceptual pre-training")
    pairs = load_pairs(manifest, train_recs)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & (2**64 - 1))))
    opt = AdamState(pnet.net.params)
    for _ in range(epochs):
        order = rng.permutation(len(pairs))
        for batch in _epoch_batches(order, batch_size):
            clean = TensorND(batch_from_sequences([pairs[j].clean for j in batch]))
            pnet.net.params.zero_grad()
            out = pnet.net.forward(clean, mode="train", rng=rng)
            loss = mse_loss(out, clean)
            loss.backward()
            adam_step(pnet.net.params, pnet.net.params.gradients(), opt, lr)
    pnet.freeze()
