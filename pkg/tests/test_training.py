import numpy as np
import pytest

from echoclutter.engine.tensor import TensorND, no_grad
from echoclutter.errors import ContractError, ParameterError
from echoclutter.losses import build_discriminator, build_perceptual_net
from echoclutter.network import build_network, desk_config
from echoclutter.sequence import DatasetManifest, ManifestRecord
from echoclutter.training import (TrainConfig, load_pairs, pretrain_perceptual,
                                  split_records, train)

from .conftest import make_dataset


def _tiny_net(seed=1):
    return build_network(desk_config(dropout_rate=0.05), seed=seed)


def test_train_config_validation():
    cfg = TrainConfig(loss_kind="rec", lambda_adv=0.5, lambda_prc=0.5)
    assert cfg.lambda_adv == 0.0 and cfg.lambda_prc == 0.0
    with pytest.raises(ParameterError):
        TrainConfig(loss_kind="bogus")
    with pytest.raises(ParameterError):
        TrainConfig(lambda_rec=-1.0)


def test_split_records(tiny_dataset):
    train_recs, val_recs = split_records(tiny_dataset)
    assert train_recs and val_recs
    assert all(r.split == "val" for r in val_recs)
    assert len(train_recs) + len(val_recs) == len(tiny_dataset.records)


def test_train_requires_both_splits(tmp_path):
    manifest = make_dataset(tmp_path / "ds", n=4, size=(16, 16, 4), val_frac=0.0)
    with pytest.raises(ContractError):
        train(_tiny_net(), manifest, TrainConfig(epochs=1))


def test_load_pairs_honors_start_frame_offset(tmp_path):
    manifest = make_dataset(tmp_path / "ds", n=2, size=(16, 16, 4), seed=5)
    rec = manifest.records[0]
    shifted_rec = ManifestRecord(rec.id, rec.clean_path, rec.cluttered_path,
                                 rec.mask_path, rec.pattern_id, 2)
    base = load_pairs(manifest, [rec])[0]
    rolled = load_pairs(manifest, [shifted_rec])[0]
    assert np.array_equal(rolled.clean.data, np.roll(base.clean.data, -2, axis=2))
    assert np.array_equal(rolled.cluttered.data, np.roll(base.cluttered.data, -2, axis=2))


def test_training_decreases_loss_and_tracks_best(tmp_path):
    manifest = make_dataset(tmp_path / "ds", n=8, size=(16, 16, 4), seed=2)
    net = _tiny_net()
    cfg = TrainConfig(epochs=4, seed=9)
    log, best = train(net, manifest, cfg)
    assert len(log.rows) == 4
    val = [r.val_loss for r in log.rows]
    assert val[-1] < val[0] * 1.05  # should not blow up; typically decreases
    assert log.best_epoch == int(np.argmin(val)) + 1
    # the returned network carries the best checkpoint
    for name, t in net.params.items():
        assert np.array_equal(t.data, best[name])


def test_training_deterministic(tmp_path):
    manifest = make_dataset(tmp_path / "ds", n=6, size=(16, 16, 4), seed=4)
    states = []
    for _ in range(2):
        net = _tiny_net(seed=2)
        log, best = train(net, manifest, TrainConfig(epochs=2, seed=5))
        states.append((tuple((r.train_loss, r.val_loss, r.lr) for r in log.rows),
                       {k: v.tobytes() for k, v in best.items()}))
    assert states[0][0] == states[1][0]
    assert states[0][1] == states[1][1]


def test_lr_trace_follows_plateau_rule(tmp_path):
    # constant data makes validation flat after the first epoch, so the lr
    # must drop by 0.1x every `patience` epochs
    manifest = make_dataset(tmp_path / "ds", n=4, size=(16, 16, 4), seed=6)
    net = _tiny_net(seed=3)
    # freeze everything: zero lr is not allowed, so instead verify against
    # the recorded validation trace with the scheduler's own rule
    cfg = TrainConfig(epochs=11, seed=7, scheduler_patience=2)
    log, _ = train(net, manifest, cfg)
    from echoclutter.engine.optim import LRSchedulerState, lr_plateau_update
    state = LRSchedulerState(lr=cfg.lr, patience=2)
    for row in log.rows:
        assert row.lr == state.lr
        lr_plateau_update(state, row.val_loss)


def test_csv_log_format(tmp_path):
    manifest = make_dataset(tmp_path / "ds", n=4, size=(16, 16, 4), seed=8)
    net = _tiny_net(seed=4)
    log, _ = train(net, manifest, TrainConfig(epochs=2, seed=1))
    path = tmp_path / "log.csv"
    log.save_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss,lr"
    assert len(lines) == 3
    assert lines[1].startswith("1,")


def test_adversarial_training_runs(tmp_path):
    manifest = make_dataset(tmp_path / "ds", n=4, size=(16, 16, 4), seed=3)
    net = _tiny_net(seed=5)
    disc = build_discriminator(base_channels=2, blocks=2, seed=6)
    cfg = TrainConfig(loss_kind="rec_adv", epochs=1, seed=2)
    log, _ = train(net, manifest, cfg, disc=disc)
    assert np.isfinite(log.rows[0].train_loss)
    with pytest.raises(ContractError):
        train(net, manifest, cfg)  # missing discriminator


def test_perceptual_training_runs(tmp_path):
    manifest = make_dataset(tmp_path / "ds", n=4, size=(16, 16, 4), seed=3)
    pnet = build_perceptual_net(base_channels=2, levels=2, seed=8)
    pretrain_perceptual(pnet, manifest, epochs=1, seed=4)
    assert all(not t.requires_grad for _, t in pnet.net.params.items())
    net = _tiny_net(seed=5)
    cfg = TrainConfig(loss_kind="rec_prc", epochs=1, seed=2)
    log, _ = train(net, manifest, cfg, pnet=pnet)
    assert np.isfinite(log.rows[0].train_loss)
