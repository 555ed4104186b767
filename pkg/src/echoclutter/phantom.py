"""Deterministic phantom generator used as the clean-data source.

The phantom is a sector-supported image of a bright annular "wall" around a
dark cavity, embedded in mid-gray tissue, textured with a smoothed
multiplicative speckle field.  The wall radius contracts and relaxes
periodically to mimic cyclic motion.  Everything is a pure function of
(config, frames, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ParameterError
from .geometry import SectorGeometry, sector_mask
from .sequence import Sequence

LABEL_OUTSIDE = 0
LABEL_CAVITY = 1
LABEL_WALL = 2
LABEL_TISSUE = 3

_SPECKLE_SMOOTH_SIGMA = 1.2
_SPECKLE_CONTRAST = 0.35


@dataclass(frozen=True)
class PhantomConfig:
    geometry: SectorGeometry
    speckle_seed: int = 0
    wall_brightness: float = 0.85
    cavity_brightness: float = 0.10
    contraction_amplitude: float = 0.15
    cycle_frames: int = 25

    def __post_init__(self):
        if not 0.0 <= self.wall_brightness <= 1.0 or not 0.0 <= self.cavity_brightness <= 1.0:
            raise ParameterError("brightness values must lie in [0, 1]")
        if self.wall_brightness <= self.cavity_brightness:
            raise ParameterError("wall brightness must exceed cavity brightness")
        if not 0.0 <= self.contraction_amplitude < 1.0:
            raise ParameterError("contraction amplitude must lie in [0, 1)")
        if self.cycle_frames < 1:
            raise ParameterError("cycle_frames must be >= 1")


def phantom_shape(geom: SectorGeometry) -> tuple[int, int]:
    """Image shape implied by a top-centered sector geometry."""
    h = int(np.ceil(geom.apex[0] + geom.radius))
    w = int(np.ceil(2.0 * geom.apex[1]))
    if h < 1 or w < 1:
        raise ParameterError("geometry implies an empty image")
    return h, w


def generate_phantom(cfg: PhantomConfig, frames: int, seed: int,
                     return_labels: bool = False):
    """Render a phantom sequence; optionally also return per-frame region labels.

    Deterministic: equal (cfg, frames, seed) give bit-identical output.  All
    pixels outside the sector mask are exactly zero.
    """
    if frames < 1:
        raise ParameterError(f"frames must be >= 1, got {frames}")
    h, w = phantom_shape(cfg.geometry)
    sector = sector_mask(cfg.geometry, h, w)

    ss = np.random.SeedSequence([int(seed) & (2**64 - 1),
                                 int(cfg.speckle_seed) & (2**64 - 1)])
    rng = np.random.Generator(np.random.PCG64(ss))

    # static multiplicative speckle field, smoothed to a grain size ~1 px
    noise = rng.standard_normal((h, w))
    smooth = ndimage.gaussian_filter(noise, _SPECKLE_SMOOTH_SIGMA)
    smooth /= max(smooth.std(), 1e-12)
    speckle = np.clip(1.0 + _SPECKLE_CONTRAST * smooth, 0.05, 1.95)

    geom = cfg.geometry
    center_r = geom.apex[0] + 0.55 * geom.radius
    center_c = geom.apex[1]
    base_radius = 0.28 * geom.radius
    thickness = 0.14 * geom.radius
    tissue = 0.5 * (cfg.wall_brightness + cfg.cavity_brightness)

    rows = np.arange(h, dtype=np.float64)[:, None]
    cols = np.arange(w, dtype=np.float64)[None, :]
    dist = np.hypot(rows - center_r, cols - center_c)

    data = np.zeros((h, w, frames), dtype=np.float32)
    labels = np.zeros((h, w, frames), dtype=np.uint8) if return_labels else None
    phase = 2.0 * np.pi * np.arange(frames) / cfg.cycle_frames
    radii = base_radius * (1.0 - 0.5 * cfg.contraction_amplitude * (1.0 - np.cos(phase)))

    for f in range(frames):
        r_f = radii[f]
        wall = np.abs(dist - r_f) <= thickness / 2.0
        cavity = dist < r_f - thickness / 2.0
        frame = np.full((h, w), tissue)
        frame[cavity] = cfg.cavity_brightness
        frame[wall] = cfg.wall_brightness
        frame *= speckle
        np.clip(frame, 0.0, 1.0, out=frame)
        frame[~sector] = 0.0
        data[:, :, f] = frame.astype(np.float32)
        if labels is not None:
            lab = np.full((h, w), LABEL_TISSUE, dtype=np.uint8)
            lab[cavity] = LABEL_CAVITY
            lab[wall] = LABEL_WALL
            lab[~sector] = LABEL_OUTSIDE
            labels[:, :, f] = lab

    seq = Sequence(data)
    if return_labels:
        return seq, labels
    return seq
