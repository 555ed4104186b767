import numpy as np
import pytest

from echoclutter.engine.gradcheck import grad_check
from echoclutter.engine.tensor import TensorND, mse_loss, no_grad
from echoclutter.errors import ContractError, DimensionError
from echoclutter.network import (FilterNet, NetConfig, attention_gate_forward,
                                 batch_from_sequences, build_network, desk_config,
                                 dump_attention, filter_sequence, forward_filter)
from echoclutter.sequence import Sequence


def _rand_batch(rng, n=1, h=16, w=16, f=4):
    return rng.random((n, 1, h, w, f)).astype(np.float32)


# ---------------------------------------------------------------- build

def test_build_deterministic():
    a = build_network(desk_config(), seed=3)
    b = build_network(desk_config(), seed=3)
    for name, t in a.params.items():
        assert np.array_equal(t.data, b.params[name].data)
    c = build_network(desk_config(), seed=4)
    assert any(not np.array_equal(t.data, c.params[name].data)
               for name, t in a.params.items())


def _audit_conv_stack(levels, base, temporal=True, attention=True):
    """Independent closed-form parameter count for the declared topology."""
    k = 27 if temporal else 9
    total = 0
    bn_channels = 0
    in_c = 1
    gate = base * 2 ** (levels + 1)
    for level in range(levels):
        width = base * 2 ** level
        total += width * in_c * k + width
        total += (2 * width) * width * k + 2 * width
        bn_channels += width + 2 * width
        in_c = 2 * width
    bottom = base * 2 ** levels
    total += bottom * in_c * k + bottom
    total += (2 * bottom) * bottom * k + 2 * bottom
    bn_channels += bottom + 2 * bottom
    coarse = 2 * bottom
    for level in range(levels - 1, -1, -1):
        skip = base * 2 ** (level + 1)
        total += skip * (coarse + skip) * k + skip
        total += skip * skip * k + skip
        bn_channels += 2 * skip
        coarse = skip
    total += 1 * coarse * 1 + 1           # final 1x1x1
    total += 2 * bn_channels              # gamma + beta
    if attention:
        g = 2 * bottom
        for level in range(levels - 1, -1, -1):
            skip = base * 2 ** (level + 1)
            total += skip * skip + skip   # wx + shared bias
            total += skip * g             # wg, no bias
            total += skip + 1             # psi + bias
            g = skip
    return total


def test_parameter_count_full_scale_band():
    net = build_network(NetConfig(levels=3, base_channels=16), seed=0)
    count = net.n_parameters()
    assert 4_000_000 <= count <= 5_500_000
    assert count == _audit_conv_stack(3, 16)


def test_parameter_count_desk_scale_audit():
    net = build_network(desk_config(), seed=0)
    assert net.n_parameters() == _audit_conv_stack(2, 8)
    net2d = build_network(desk_config(temporal_kernels=False), seed=0)
    assert net2d.n_parameters() == _audit_conv_stack(2, 8, temporal=False)
    plain = build_network(NetConfig(levels=2, base_channels=8, use_attention=False),
                          seed=0)
    assert plain.n_parameters() == _audit_conv_stack(2, 8, attention=False)


# ---------------------------------------------------------------- forward

def test_residual_identity_with_zero_final_conv(rng):
    net = build_network(desk_config(), seed=1)
    x = _rand_batch(rng, n=2)
    with no_grad():
        out = net.forward(TensorND(x), mode="eval")
    assert out.data.tobytes() == x.tobytes()  # bit-exact identity


def test_all_zero_weights_without_residual(rng):
    cfg = desk_config(use_residual_skip=False, use_attention=False)
    net = build_network(cfg, seed=1)
    for name, t in net.params.items():
        if name.endswith(".w") or name.endswith(".b") or "beta" in name:
            t.data = np.zeros_like(t.data)
    with no_grad():
        out = net.forward(TensorND(_rand_batch(rng)), mode="eval")
    assert not out.data.any()


def test_forward_shape_preserved_all_variants(rng):
    x = _rand_batch(rng, n=2, h=16, w=24, f=5)
    for cfg in (desk_config(), desk_config(use_attention=False),
                desk_config(use_residual_skip=False),
                desk_config(temporal_kernels=False),
                NetConfig(levels=1, base_channels=2)):
        net = build_network(cfg, seed=2)
        with no_grad():
            out = net.forward(TensorND(x), mode="eval")
        assert out.data.shape == x.shape


def test_forward_rejects_indivisible_dims(rng):
    net = build_network(desk_config(), seed=1)
    with pytest.raises(DimensionError):
        forward_filter(net, _rand_batch(rng, h=18, w=16))


def test_eval_forward_deterministic(rng):
    net = build_network(desk_config(), seed=5)
    net.params["final.w"].data = rng.standard_normal(
        net.params["final.w"].data.shape).astype(np.float32) * 0.05
    x = _rand_batch(rng)
    with no_grad():
        a = net.forward(TensorND(x), mode="eval")
        b = net.forward(TensorND(x), mode="eval")
    assert a.data.tobytes() == b.data.tobytes()


def test_2d_variant_is_frame_equivariant(rng):
    net = build_network(desk_config(temporal_kernels=False), seed=6)
    net.params["final.w"].data = rng.standard_normal(
        net.params["final.w"].data.shape).astype(np.float32) * 0.1
    x = _rand_batch(rng, f=6)
    perm = np.array([3, 1, 5, 0, 2, 4])
    with no_grad():
        out = net.forward(TensorND(x), mode="eval").data
        out_perm = net.forward(TensorND(np.ascontiguousarray(x[..., perm])),
                               mode="eval").data
    assert np.allclose(out[..., perm], out_perm, atol=1e-6)


def test_3d_variant_mixes_frames(rng):
    net = build_network(desk_config(), seed=6)
    net.params["final.w"].data = rng.standard_normal(
        net.params["final.w"].data.shape).astype(np.float32) * 0.1
    x = _rand_batch(rng, f=6)
    perm = np.array([3, 1, 5, 0, 2, 4])
    with no_grad():
        out = net.forward(TensorND(x), mode="eval").data
        out_perm = net.forward(TensorND(np.ascontiguousarray(x[..., perm])),
                               mode="eval").data
    assert not np.allclose(out[..., perm], out_perm, atol=1e-6)


# ---------------------------------------------------------------- attention

def _gate_params(rng, fl=2, fg=3):
    wx = rng.standard_normal((fl, fl, 1, 1, 1)).astype(np.float32)
    bxg = rng.standard_normal(fl).astype(np.float32) * 0.1
    wg = rng.standard_normal((fl, fg, 1, 1, 1)).astype(np.float32)
    psi = rng.standard_normal((1, fl, 1, 1, 1)).astype(np.float32)
    bpsi = rng.standard_normal(1).astype(np.float32) * 0.1
    return wx, bxg, wg, psi, bpsi


def test_attention_zero_psi_gives_half(rng):
    x = TensorND(rng.random((1, 2, 4, 4, 3)).astype(np.float32))
    g = TensorND(rng.random((1, 3, 2, 2, 3)).astype(np.float32))
    wx, bxg, wg, psi, bpsi = _gate_params(rng)
    out, q, alpha = attention_gate_forward(
        x, g, TensorND(wx), TensorND(bxg), TensorND(wg),
        TensorND(np.zeros_like(psi)), TensorND(np.zeros(1, np.float32)))
    assert np.allclose(alpha.data, 0.5)
    assert np.allclose(out.data, 0.5 * x.data, atol=1e-7)
    assert not q.data.any()


def test_attention_saturated_bias_passes_through(rng):
    x = TensorND(rng.random((1, 2, 4, 4, 3)).astype(np.float32))
    g = TensorND(rng.random((1, 3, 2, 2, 3)).astype(np.float32))
    wx, bxg, wg, psi, bpsi = _gate_params(rng)
    out, _, alpha = attention_gate_forward(
        x, g, TensorND(wx), TensorND(bxg), TensorND(wg),
        TensorND(np.zeros_like(psi)), TensorND(np.full(1, 20.0, np.float32)))
    assert np.abs(out.data - x.data).max() <= 1e-6
    assert (alpha.data > 0).all() and (alpha.data <= 1).all()


def test_attention_alpha_in_open_interval_and_frames_kept(rng):
    x = TensorND(rng.random((1, 2, 8, 8, 5)).astype(np.float32))
    g = TensorND(rng.random((1, 3, 4, 4, 5)).astype(np.float32))
    wx, bxg, wg, psi, bpsi = _gate_params(rng)
    out, q, alpha = attention_gate_forward(x, g, TensorND(wx), TensorND(bxg),
                                           TensorND(wg), TensorND(psi), TensorND(bpsi))
    assert alpha.data.shape == (1, 1, 8, 8, 5)
    assert q.data.shape == (1, 1, 4, 4, 5)
    assert ((alpha.data > 0) & (alpha.data < 1)).all()
    assert out.data.shape == x.data.shape


def test_attention_shape_mismatch(rng):
    x = TensorND(rng.random((1, 2, 4, 4, 3)).astype(np.float32))
    g = TensorND(rng.random((1, 3, 3, 2, 3)).astype(np.float32))
    wx, bxg, wg, psi, bpsi = _gate_params(rng)
    with pytest.raises(DimensionError):
        attention_gate_forward(x, g, TensorND(wx), TensorND(bxg), TensorND(wg),
                               TensorND(psi), TensorND(bpsi))


def test_attention_gradcheck(rng):
    x = rng.standard_normal((1, 2, 4, 4, 2)).astype(np.float32)
    g = rng.standard_normal((1, 3, 2, 2, 2)).astype(np.float32)
    wx, bxg, wg, psi, bpsi = _gate_params(rng)
    err = grad_check(
        lambda t: attention_gate_forward(t[0], t[1], t[2], t[3], t[4], t[5], t[6])[0],
        [x, g, wx, bxg, wg, psi, bpsi], rng=rng)
    assert err <= 1e-3


# ---------------------------------------------------------------- end to end

def test_tiny_network_end_to_end_gradcheck(rng):
    cfg = NetConfig(levels=1, base_channels=2, dropout_rate=0.0)
    net = build_network(cfg, seed=7)
    x = rng.random((1, 1, 8, 8, 4)).astype(np.float32)
    target = rng.random((1, 1, 8, 8, 4)).astype(np.float32)
    names = net.params.names()

    def fn(tensors):
        originals = {}
        for name, t in zip(names, tensors[1:]):
            originals[name] = net.params._params[name]
            net.params._params[name] = t
        try:
            out = net.forward(tensors[0], mode="train", rng=None)
            return mse_loss(out, TensorND(target.astype(tensors[0].data.dtype)))
        finally:
            for name, t in originals.items():
                net.params._params[name] = t

    inputs = [x] + [net.params[name].data for name in names]
    # eps below every relu-kink margin of the composed forward pass
    err = grad_check(fn, inputs, eps=1e-4, trials=2, rng=rng)
    assert err <= 1e-3


def test_filter_sequence_clamps_and_keeps_shape(rng):
    net = build_network(desk_config(), seed=1)
    net.params["final.b"].data = np.array([3.0], np.float32)  # drive output > 1
    seq = Sequence(rng.random((16, 16, 4), dtype=np.float32))
    out = filter_sequence(net, seq)
    assert out.shape == seq.shape
    assert out.data.max() <= 1.0


def test_dump_attention_shapes_and_range(rng):
    net = build_network(desk_config(), seed=2)
    seq = Sequence(rng.random((16, 16, 4), dtype=np.float32))
    maps = dump_attention(net, seq)
    assert sorted(maps) == [1, 2]
    for scale, (q_seq, a_seq) in maps.items():
        expect_h = 16 // 2 ** (scale - 1)
        assert q_seq.shape == (expect_h, expect_h, 4)
        assert a_seq.shape == (expect_h, expect_h, 4)
        assert (a_seq.data > 0).all() and (a_seq.data < 1).all()
        assert q_seq.data.min() >= 0.0 and q_seq.data.max() <= 1.0


def test_dump_attention_requires_gates(rng):
    net = build_network(desk_config(use_attention=False), seed=2)
    with pytest.raises(ContractError):
        dump_attention(net, Sequence(rng.random((16, 16, 4), dtype=np.float32)))


def test_batch_from_sequences(rng):
    seqs = [Sequence(rng.random((8, 8, 3), dtype=np.float32)) for _ in range(2)]
    batch = batch_from_sequences(seqs)
    assert batch.shape == (2, 1, 8, 8, 3)
    assert np.array_equal(batch[1, 0], seqs[1].data)
