"""Loss functions: reconstruction, masked adversarial, and perceptual."""

from __future__ import annotations

import numpy as np

from .engine.tensor import (ParamStore, TensorND, batchnorm3d, clamped_log, conv3d,
                            detach, mean_all, mse_loss, relu, sigmoid, spatial_mean,
                            maxpool3d)
from .errors import ContractError, DimensionError, ParameterError
from .network import FilterNet, NetConfig

loss_rec = mse_loss


class Discriminator:
    """Shallow residual 3D classifier: stem, striding residual blocks, GAP, logit."""

    def __init__(self, params: ParamStore, blocks: int, temporal_kernels: bool = True):
        self.params = params
        self.blocks = blocks
        self.kernel = (3, 3, 3) if temporal_kernels else (3, 3, 1)

    def _conv_bn_relu(self, x, name, mode):
        p = self.params
        y = conv3d(x, p[f"{name}.w"], p[f"{name}.b"])
        y = batchnorm3d(y, p[f"{name}.bn.gamma"], p[f"{name}.bn.beta"],
                        p.buffers[f"{name}.bn.mean"], p.buffers[f"{name}.bn.var"], mode)
        return relu(y)

    def forward(self, x: TensorND, mode: str = "eval") -> TensorND:
        """Masked sequence batch (N, 1, H, W, F) -> scalar logit per sample."""
        p = self.params
        y = self._conv_bn_relu(x, "d.stem", mode)
        for i in range(self.blocks):
            name = f"d.res{i}"
            main = self._conv_bn_relu(y, f"{name}.c1", mode)
            main = conv3d(main, p[f"{name}.c2.w"], p[f"{name}.c2.b"])
            main = batchnorm3d(main, p[f"{name}.c2.bn.gamma"], p[f"{name}.c2.bn.beta"],
                               p.buffers[f"{name}.c2.bn.mean"],
                               p.buffers[f"{name}.c2.bn.var"], mode)
            short = conv3d(y, p[f"{name}.proj.w"], p[f"{name}.proj.b"])
            y = maxpool3d(relu(main + short))
        y = spatial_mean(y)
        return conv3d(y, p["d.head.w"], p["d.head.b"])


def build_discriminator(base_channels: int = 8, blocks: int = 3, seed: int = 0,
                        temporal_kernels: bool = True) -> Discriminator:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & (2**64 - 1))))
    params = ParamStore()
    k = (3, 3, 3) if temporal_kernels else (3, 3, 1)
    one = (1, 1, 1)

    def conv_params(name, in_c, out_c, kernel, bn=True):
        fan_in = in_c * int(np.prod(kernel))
        bound = float(np.sqrt(6.0 / fan_in))
        params.add(f"{name}.w", rng.uniform(-bound, bound,
                                            size=(out_c, in_c, *kernel)).astype(np.float32))
        params.add(f"{name}.b", np.zeros(out_c, dtype=np.float32))
        if bn:
            params.add(f"{name}.bn.gamma", np.ones(out_c, dtype=np.float32))
            params.add(f"{name}.bn.beta", np.zeros(out_c, dtype=np.float32))
            params.add_buffer(f"{name}.bn.mean", np.zeros(out_c, dtype=np.float32))
            params.add_buffer(f"{name}.bn.var", np.ones(out_c, dtype=np.float32))

    c = base_channels
    conv_params("d.stem", 1, c, k)
    for i in range(blocks):
        conv_params(f"d.res{i}.c1", c, 2 * c, k)
        conv_params(f"d.res{i}.c2", 2 * c, 2 * c, k)
        conv_params(f"d.res{i}.proj", c, 2 * c, one, bn=False)
        c *= 2
    conv_params("d.head", c, 1, one, bn=False)
    return Discriminator(params, blocks, temporal_kernels)


def loss_adversarial(pred: TensorND, target: TensorND, mask: np.ndarray,
                     disc: Discriminator, mode: str = "train"):
    """Masked GAN terms; returns (generator term, discriminator term).

    The discriminator judges clutter-zone pixels only: both inputs are
    multiplied by the binary mask.  The discriminator term is the usual
    two-sided objective on (real, detached fake); the generator term is the
    non-saturating -log D(fake).
    """
    if pred.data.shape != target.data.shape:
        raise DimensionError("pred and target shapes differ")
    m = np.asarray(mask, dtype=np.float32)
    if m.ndim == 4:  # (N, H, W, F) -> add channel axis
        m = m[:, None]
    if m.shape != pred.data.shape:
        raise DimensionError(f"mask shape {m.shape} incompatible with {pred.data.shape}")
    m_t = TensorND(m)

    p_fake = sigmoid(disc.forward(pred * m_t, mode))
    gen_term = -1.0 * mean_all(clamped_log(p_fake))

    p_real = sigmoid(disc.forward(target * m_t, mode))
    p_fake_d = sigmoid(disc.forward(detach(pred) * m_t, mode))
    disc_term = -1.0 * (mean_all(clamped_log(p_real))
                        + mean_all(clamped_log(1.0 - p_fake_d)))
    return gen_term, disc_term


class PerceptualNet:
    """Frozen vanilla autoencoder exposing its first two encoder feature taps."""

    def __init__(self, net: FilterNet):
        if net.config.use_attention or net.config.use_residual_skip:
            raise ParameterError("the perceptual network must be a vanilla autoencoder")
        if net.config.levels < 2:
            raise ParameterError("the perceptual network needs at least two encoder levels")
        self.net = net

    def freeze(self) -> None:
        self.net.params.freeze()

    def features(self, x: TensorND):
        taps: dict = {}
        self.net.forward(x, mode="eval", taps=taps)
        return taps["enc0b"], taps["enc1b"]


def build_perceptual_net(base_channels: int = 8, levels: int = 2, seed: int = 0,
                         temporal_kernels: bool = True) -> PerceptualNet:
    cfg = NetConfig(levels=levels, base_channels=base_channels,
                    use_attention=False, use_residual_skip=False,
                    temporal_kernels=temporal_kernels)
    from .network import build_network
    return PerceptualNet(build_network(cfg, seed=seed))


def loss_perceptual(pred: TensorND, target: TensorND, pnet) -> TensorND:
    """Equal-weight sum of MSEs between the two encoder-level feature maps."""
    if not isinstance(target, TensorND):
        target = TensorND(np.asarray(target, dtype=np.float32))
    f1_pred, f2_pred = pnet.features(pred)
    f1_tgt, f2_tgt = pnet.features(detach(target))
    return mse_loss(f1_pred, detach(f1_tgt)) + mse_loss(f2_pred, detach(f2_tgt))
