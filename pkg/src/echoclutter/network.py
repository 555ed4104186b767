"""Attention-gated residual 3D autoencoder for sequence filtering.

Encoder levels double the channel width inside each level (convA keeps the
width, convB doubles it) and halve H and W with (2, 2, 1) max pooling, so
the frame count survives every scale.  Decoder levels upsample, gate the
matching skip with an additive attention gate, concatenate, and convolve
back down.  A final 1x1x1 convolution maps to one channel; with the
input-output skip enabled the network learns only the correction to
subtract, and a zeroed final convolution makes it the exact identity.

The 2D variant keeps the same topology with temporal kernel extents of 1,
so frames are processed independently (a controlled ablation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine.tensor import (ParamStore, TensorND, batchnorm3d, concat_channels,
                            conv3d, dropout, maxpool3d, relu, sigmoid, upsample3d)
from .errors import ContractError, DimensionError, ParameterError
from .sequence import Sequence


@dataclass(frozen=True)
class NetConfig:
    levels: int = 3
    base_channels: int = 16
    use_attention: bool = True
    use_residual_skip: bool = True
    temporal_kernels: bool = True
    dropout_rate: float = 0.05

    def __post_init__(self):
        if self.levels < 1:
            raise ParameterError(f"levels must be >= 1, got {self.levels}")
        if self.base_channels < 1:
            raise ParameterError(f"base_channels must be >= 1, got {self.base_channels}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ParameterError("dropout rate must lie in [0, 1)")

    @property
    def kernel_shape(self) -> tuple[int, int, int]:
        return (3, 3, 3) if self.temporal_kernels else (3, 3, 1)


def desk_config(**overrides) -> NetConfig:
    """Small configuration for CPU-scale experiments."""
    defaults = dict(levels=2, base_channels=8)
    defaults.update(overrides)
    return NetConfig(**defaults)


def _conv_layers(cfg: NetConfig) -> list[tuple[str, int, int, tuple[int, int, int]]]:
    """Ordered (name, in_channels, out_channels, kernel) for every convolution."""
    k = cfg.kernel_shape
    one = (1, 1, 1)
    base = cfg.base_channels
    layers = []
    in_c = 1
    for level in range(cfg.levels):
        width = base * 2 ** level
        layers.append((f"enc{level}a", in_c, width, k))
        layers.append((f"enc{level}b", width, 2 * width, k))
        in_c = 2 * width
    bottom = base * 2 ** cfg.levels
    layers.append(("bot.a", in_c, bottom, k))
    layers.append(("bot.b", bottom, 2 * bottom, k))
    coarse = 2 * bottom
    for level in range(cfg.levels - 1, -1, -1):
        skip = base * 2 ** (level + 1)
        layers.append((f"dec{level}a", coarse + skip, skip, k))
        layers.append((f"dec{level}b", skip, skip, k))
        coarse = skip
    layers.append(("final", coarse, 1, one))
    if cfg.use_attention:
        gate = 2 * bottom
        for level in range(cfg.levels - 1, -1, -1):
            skip = base * 2 ** (level + 1)
            layers.append((f"ag{level}.wx", skip, skip, one))
            layers.append((f"ag{level}.wg", gate, skip, one))
            layers.append((f"ag{level}.psi", skip, 1, one))
            gate = skip
    return layers


def build_network(cfg: NetConfig, seed: int = 0) -> "FilterNet":
    """Deterministically initialized network.

    Convolutions get fan-in-scaled uniform weights; the final convolution is
    zeroed so the residual configuration starts as the identity filter.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & (2**64 - 1))))
    params = ParamStore()
    for name, in_c, out_c, k in _conv_layers(cfg):
        fan_in = in_c * int(np.prod(k))
        if name == "final":
            w = np.zeros((out_c, in_c, *k), dtype=np.float32)
        else:
            bound = float(np.sqrt(6.0 / fan_in))
            w = rng.uniform(-bound, bound, size=(out_c, in_c, *k)).astype(np.float32)
        params.add(f"{name}.w", w)
        if not name.endswith(".wg"):  # the gate sum carries one shared bias, on wx
            params.add(f"{name}.b", np.zeros(out_c, dtype=np.float32))
        if not name.startswith(("ag", "final")):
            params.add(f"{name}.bn.gamma", np.ones(out_c, dtype=np.float32))
            params.add(f"{name}.bn.beta", np.zeros(out_c, dtype=np.float32))
            params.add_buffer(f"{name}.bn.mean", np.zeros(out_c, dtype=np.float32))
            params.add_buffer(f"{name}.bn.var", np.ones(out_c, dtype=np.float32))
    return FilterNet(cfg, params)


def attention_gate_forward(x_l: TensorND, g: TensorND, wx: TensorND, bxg: TensorND,
                           wg: TensorND, psi: TensorND, bpsi: TensorND):
    """Additive attention gate over a skip connection.

    The skip tensor is pooled down to the gating resolution, combined with
    the gating signal through 1x1x1 maps, squashed to a one-channel
    pre-activation map `q`, and the sigmoid of `q`, upsampled back to the
    skip resolution, scales the skip element-wise.  The frame dimension is
    never reduced, so the gate attends jointly over space and time.

    Returns (attended skip, intermediate map q, final map alpha).
    """
    if g.data.shape[2] * 2 != x_l.data.shape[2] or g.data.shape[3] * 2 != x_l.data.shape[3]:
        raise DimensionError(f"gating signal must be at half resolution: "
                             f"{g.data.shape} vs {x_l.data.shape}")
    if g.data.shape[4] != x_l.data.shape[4]:
        raise DimensionError("gating signal and skip must share the frame count")
    xd = maxpool3d(x_l)
    zero = TensorND(np.zeros(wg.data.shape[0], dtype=np.float32))
    combined = relu(conv3d(xd, wx, bxg) + conv3d(g, wg, zero))
    q = conv3d(combined, psi, bpsi)
    alpha = upsample3d(sigmoid(q))
    return x_l * alpha, q, alpha


class FilterNet:
    """Config + parameter store + the fixed forward topology."""

    def __init__(self, config: NetConfig, params: ParamStore):
        self.config = config
        self.params = params

    def n_parameters(self) -> int:
        return self.params.n_parameters()

    def _block(self, x: TensorND, name: str, mode: str) -> TensorND:
        p = self.params
        y = conv3d(x, p[f"{name}.w"], p[f"{name}.b"])
        y = batchnorm3d(y, p[f"{name}.bn.gamma"], p[f"{name}.bn.beta"],
                        p.buffers[f"{name}.bn.mean"], p.buffers[f"{name}.bn.var"], mode)
        return relu(y)

    def _gate(self, level: int, x_l: TensorND, g: TensorND):
        p = self.params
        return attention_gate_forward(
            x_l, g,
            p[f"ag{level}.wx.w"], p[f"ag{level}.wx.b"],
            p[f"ag{level}.wg.w"], p[f"ag{level}.psi.w"], p[f"ag{level}.psi.b"])

    def forward(self, x: TensorND, mode: str = "eval",
                rng: np.random.Generator | None = None,
                attention: dict | None = None,
                taps: dict | None = None) -> TensorND:
        cfg = self.config
        n, c, h, w, f = x.data.shape
        div = 2 ** cfg.levels
        if h % div or w % div:
            raise DimensionError(f"H and W must be divisible by {div}, got ({h}, {w})")
        if c != 1:
            raise DimensionError(f"expected a single input channel, got {c}")

        def drop(t):
            return dropout(t, cfg.dropout_rate, mode, rng)

        skips = []
        y = x
        for level in range(cfg.levels):
            y = self._block(y, f"enc{level}a", mode)
            y = self._block(y, f"enc{level}b", mode)
            y = drop(y)
            if taps is not None:
                taps[f"enc{level}b"] = y
            skips.append(y)
            y = maxpool3d(y)
        y = self._block(y, "bot.a", mode)
        y = self._block(y, "bot.b", mode)
        y = drop(y)

        for level in range(cfg.levels - 1, -1, -1):
            skip = skips[level]
            if cfg.use_attention:
                skip, q, alpha = self._gate(level, skip, y)
                if attention is not None:
                    attention[level] = (q, alpha)
            y = concat_channels([upsample3d(y), skip])
            y = self._block(y, f"dec{level}a", mode)
            y = self._block(y, f"dec{level}b", mode)
            y = drop(y)

        out = conv3d(y, self.params["final.w"], self.params["final.b"])
        if cfg.use_residual_skip:
            out = out + x
        return out


def forward_filter(net: FilterNet, x, mode: str = "eval",
                   rng: np.random.Generator | None = None) -> TensorND:
    """Run the filter on a (N, 1, H, W, F) batch; output keeps the input shape."""
    t = x if isinstance(x, TensorND) else TensorND(np.asarray(x, dtype=np.float32))
    return net.forward(t, mode=mode, rng=rng)


def batch_from_sequences(seqs: list[Sequence]) -> np.ndarray:
    return np.stack([s.data for s in seqs])[:, None].astype(np.float32)


def filter_sequence(net: FilterNet, seq: Sequence) -> Sequence:
    """Filter one sequence in eval mode, clamping the export to [0, 1]."""
    from .engine.tensor import no_grad
    with no_grad():
        out = net.forward(TensorND(batch_from_sequences([seq])))
    return Sequence(np.clip(out.data[0, 0], 0.0, 1.0))


def dump_attention(net: FilterNet, seq: Sequence) -> dict[int, tuple[Sequence, Sequence]]:
    """Per-scale (intermediate, final) attention maps as sequences.

    Scale numbering is 1-based with scale 1 the finest.  Both maps are
    upsampled to the skip resolution of their scale; the pre-sigmoid map is
    min-max normalized for export, the final map is already in (0, 1).
    """
    if not net.config.use_attention:
        raise ContractError("attention dumping requires a network with attention gates")
    from .engine.tensor import no_grad
    capture: dict = {}
    with no_grad():
        net.forward(TensorND(batch_from_sequences([seq])), attention=capture)
    out: dict[int, tuple[Sequence, Sequence]] = {}
    for level, (q, alpha) in capture.items():
        with no_grad():
            q_up = upsample3d(q).data[0, 0]
        span = float(q_up.max() - q_up.min())
        q_norm = (q_up - q_up.min()) / span if span > 0 else np.zeros_like(q_up)
        out[level + 1] = (Sequence(q_norm.astype(np.float32)),
                          Sequence(alpha.data[0, 0]))
    return out
