"""Parametric clutter patterns: generation, enumeration, placement, rendering.

Two artifact families are modeled: a static near-field (NF) haze centered on
the sector axis, and rib/lung (RL) blobs hugging the sector edges, static or
drifting slowly toward the sector interior.  Patterns are separable Gaussian
patches peak-normalized to a grayscale gain, enumerated over fixed parameter
grids, placed by seeded rules, rendered with sub-pixel motion, and
superimposed onto clean sequences with sector pruning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import (ContractError, DimensionError, FormatError, ParameterError,
                     PlacementError)
from .geometry import DEFAULT_CALIBRATION, PhysicalCalibration, SectorGeometry, sector_mask
from .sequence import Sequence

CLASS_NF = "NF"
CLASS_RL = "RL"
CLASS_NF_RL = "NF_RL"

RL_LEVELS = ("base", "mid", "apex")
RL_EDGES = ("right", "left")


@dataclass(frozen=True)
class SimConfig:
    """Simulation knobs; file format is UTF-8 `key = value` lines."""

    cm_per_pixel: float = DEFAULT_CALIBRATION.cm_per_pixel
    seconds_per_frame: float = DEFAULT_CALIBRATION.seconds_per_frame
    nf_band_lo: float = 0.05          # fraction of image height below the apex
    nf_band_hi: float = 0.25
    mask_threshold: float = 0.02      # ~5/255 grayscale
    subsector_angle_deg: float = 35.0

    nf_sigma_v: tuple = (10.0, 15.0, 20.0)
    nf_sigma_h: tuple = (5.0, 10.0)
    nf_gain: tuple = (150, 200, 255)
    rl_sigma_v: tuple = (3.0, 5.0)
    rl_sigma_h: tuple = (7.0, 9.0, 11.0)
    rl_gain: tuple = (150, 200, 255)
    rl_levels: tuple = RL_LEVELS
    rl_edges: tuple = RL_EDGES
    rl_velocities: tuple = (0.0, 0.5, 1.0)
    joint_nf_sigma_v: tuple = (10.0, 15.0, 20.0)
    joint_nf_sigma_h: tuple = (5.0, 10.0)
    joint_nf_gain: tuple = (200, 255)
    joint_rl_sigma_v: tuple = (5.0,)
    joint_rl_sigma_h: tuple = (9.0, 11.0)
    joint_rl_gain: tuple = (200, 255)
    joint_rl_levels: tuple = ("mid", "apex")
    joint_rl_edges: tuple = ("right",)
    joint_rl_velocities: tuple = (0.0, 1.0)

    def calibration(self) -> PhysicalCalibration:
        return PhysicalCalibration(self.cm_per_pixel, self.seconds_per_frame)

    def save(self, path) -> None:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ", ".join(str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SimConfig":
        known = {f.name: f for f in fields(cls)}
        defaults = cls()
        overrides = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = line.partition("=")
            key = key.strip()
            raw = raw.strip()
            if key not in known:
                raise FormatError(f"{path}:{lineno}: unknown key {key!r}")
            current = getattr(defaults, key)
            if isinstance(current, tuple):
                items = [s.strip() for s in raw.split(",") if s.strip()]
                if all(isinstance(x, str) for x in current) and current and not _is_number(current[0]):
                    overrides[key] = tuple(items)
                else:
                    overrides[key] = tuple(_parse_number(s) for s in items)
            else:
                overrides[key] = _parse_number(raw)
        return replace(defaults, **overrides)


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _parse_number(s: str):
    try:
        v = float(s)
    except ValueError as exc:
        raise FormatError(f"not a number: {s!r}") from exc
    return int(v) if v.is_integer() and "." not in s and "e" not in s.lower() else v


DEFAULT_SIM_CONFIG = SimConfig()


@dataclass(frozen=True)
class NfParams:
    sigma_v: float
    sigma_h: float
    gain: float


@dataclass(frozen=True)
class RlParams:
    sigma_v: float
    sigma_h: float
    gain: float
    level: str
    edge: str
    velocity_cm_s: float

    def __post_init__(self):
        if self.level not in RL_LEVELS:
            raise ParameterError(f"unknown cardiac level {self.level!r}")
        if self.edge not in RL_EDGES:
            raise ParameterError(f"unknown sector edge {self.edge!r}")


@dataclass(frozen=True)
class ClutterSpec:
    clutter_class: str
    pattern_id: int
    nf: NfParams | None = None
    rl: RlParams | None = None

    def __post_init__(self):
        if self.clutter_class not in (CLASS_NF, CLASS_RL, CLASS_NF_RL):
            raise ParameterError(f"unknown clutter class {self.clutter_class!r}")
        if self.clutter_class in (CLASS_NF, CLASS_NF_RL) and self.nf is None:
            raise ParameterError(f"class {self.clutter_class} requires NF parameters")
        if self.clutter_class in (CLASS_RL, CLASS_NF_RL) and self.rl is None:
            raise ParameterError(f"class {self.clutter_class} requires RL parameters")


@dataclass(frozen=True)
class GaussianPatch:
    """Separable Gaussian patch, peak-normalized so the center equals gain/255."""

    sigma_v: float
    sigma_h: float
    gain: float
    values: np.ndarray = field(repr=False)

    @property
    def center(self) -> tuple[int, int]:
        return self.values.shape[0] // 2, self.values.shape[1] // 2


def gaussian_patch(sigma_v: float, sigma_h: float, gain: float) -> GaussianPatch:
    """Build the patch raster on its 3-sigma support rectangle.

    Value at offset (dv, dh) from the center is
    (gain/255) * exp(-dh^2 / (2 sigma_h^2)) * exp(-dv^2 / (2 sigma_v^2)).
    """
    if sigma_v <= 0 or sigma_h <= 0:
        raise ParameterError(f"sigmas must be positive, got ({sigma_v}, {sigma_h})")
    if not 0 <= gain <= 255:
        raise ParameterError(f"gain must lie in [0, 255], got {gain}")
    rv = int(math.ceil(3.0 * sigma_v))
    rh = int(math.ceil(3.0 * sigma_h))
    dv = np.arange(-rv, rv + 1, dtype=np.float64)
    dh = np.arange(-rh, rh + 1, dtype=np.float64)
    col_prof = np.exp(-(dh**2) / (2.0 * sigma_h**2))
    row_prof = np.exp(-(dv**2) / (2.0 * sigma_v**2))
    values = (gain / 255.0) * np.outer(row_prof, col_prof)
    return GaussianPatch(sigma_v=sigma_v, sigma_h=sigma_h, gain=gain, values=values)


def enumerate_pattern_specs(config: SimConfig = DEFAULT_SIM_CONFIG) -> list[ClutterSpec]:
    """Full factorial pattern grids in lexicographic order with stable ids."""
    specs: list[ClutterSpec] = []
    pid = 0
    for sv in config.nf_sigma_v:
        for sh in config.nf_sigma_h:
            for g in config.nf_gain:
                specs.append(ClutterSpec(CLASS_NF, pid, nf=NfParams(sv, sh, g)))
                pid += 1
    for sv in config.rl_sigma_v:
        for sh in config.rl_sigma_h:
            for g in config.rl_gain:
                for level in config.rl_levels:
                    for edge in config.rl_edges:
                        for vel in config.rl_velocities:
                            specs.append(ClutterSpec(
                                CLASS_RL, pid, rl=RlParams(sv, sh, g, level, edge, vel)))
                            pid += 1
    joint_nf = [NfParams(sv, sh, g)
                for sv in config.joint_nf_sigma_v
                for sh in config.joint_nf_sigma_h
                for g in config.joint_nf_gain]
    joint_rl = [RlParams(sv, sh, g, level, edge, vel)
                for sv in config.joint_rl_sigma_v
                for sh in config.joint_rl_sigma_h
                for g in config.joint_rl_gain
                for level in config.joint_rl_levels
                for edge in config.joint_rl_edges
                for vel in config.joint_rl_velocities]
    for nf in joint_nf:
        for rl in joint_rl:
            specs.append(ClutterSpec(CLASS_NF_RL, pid, nf=nf, rl=rl))
            pid += 1
    return specs


def class_counts(specs: list[ClutterSpec]) -> dict[str, int]:
    counts = {CLASS_NF: 0, CLASS_RL: 0, CLASS_NF_RL: 0}
    for s in specs:
        counts[s.clutter_class] += 1
    return counts


def pattern_class(pattern_id: int, config: SimConfig = DEFAULT_SIM_CONFIG) -> str:
    n_nf = (len(config.nf_sigma_v) * len(config.nf_sigma_h) * len(config.nf_gain))
    n_rl = (len(config.rl_sigma_v) * len(config.rl_sigma_h) * len(config.rl_gain)
            * len(config.rl_levels) * len(config.rl_edges) * len(config.rl_velocities))
    n_joint = (len(config.joint_nf_sigma_v) * len(config.joint_nf_sigma_h)
               * len(config.joint_nf_gain) * len(config.joint_rl_sigma_v)
               * len(config.joint_rl_sigma_h) * len(config.joint_rl_gain)
               * len(config.joint_rl_levels) * len(config.joint_rl_edges)
               * len(config.joint_rl_velocities))
    if 0 <= pattern_id < n_nf:
        return CLASS_NF
    if pattern_id < n_nf + n_rl:
        return CLASS_RL
    if pattern_id < n_nf + n_rl + n_joint:
        return CLASS_NF_RL
    raise ParameterError(f"pattern id {pattern_id} out of range")


def dataset_size(n_patterns: int, n_views: int, n_vendors: int, n_groups: int) -> int:
    """Manifest-size combinatorics for a full factorial dataset."""
    return n_patterns * n_views * n_vendors * n_groups


@dataclass(frozen=True)
class PlacedClutter:
    """One rendered-ready clutter component with its per-frame trajectory."""

    spec: ClutterSpec
    component: str                 # "nf" or "rl"
    centers: np.ndarray            # (frames, 2) real-valued (row, col)
    rotation_deg: float
    frames: int


def place_nf(spec: ClutterSpec, geom: SectorGeometry, frames: int,
             image_shape: tuple[int, int], seed: int,
             config: SimConfig = DEFAULT_SIM_CONFIG) -> PlacedClutter:
    """Static placement on the sector centerline within the near-field band."""
    if spec.nf is None:
        raise ContractError("spec has no NF parameters")
    h, _ = image_shape
    lo = geom.apex[0] + config.nf_band_lo * h
    hi = geom.apex[0] + config.nf_band_hi * h
    if lo >= hi or hi > h - 1:
        raise PlacementError(f"near-field band [{lo:.1f}, {hi:.1f}] outside image of height {h}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & (2**64 - 1))))
    axial = rng.uniform(lo, hi)
    centers = np.tile(np.array([axial, geom.apex[1]], dtype=np.float64), (frames, 1))
    return PlacedClutter(spec=spec, component="nf", centers=centers,
                         rotation_deg=0.0, frames=frames)


def place_rl(spec: ClutterSpec, geom: SectorGeometry, cal: PhysicalCalibration,
             frames: int, image_shape: tuple[int, int], seed: int,
             config: SimConfig = DEFAULT_SIM_CONFIG) -> PlacedClutter:
    """Seeded placement in an edge sub-sector, rotated radially, drifting inward."""
    if spec.rl is None:
        raise ContractError("spec has no RL parameters")
    p = spec.rl
    h, w = image_shape
    half = geom.half_angle_deg
    wedge = min(config.subsector_angle_deg, 2.0 * half)
    if p.edge == "right":
        ang_lo, ang_hi = half - wedge, half
    else:
        ang_lo, ang_hi = -half, -half + wedge
    third = geom.radius / 3.0
    band = {"apex": (0.0, third), "mid": (third, 2.0 * third),
            "base": (2.0 * third, geom.radius)}[p.level]

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & (2**64 - 1))))
    center = None
    for _ in range(200):
        ang = math.radians(rng.uniform(ang_lo, ang_hi))
        u = rng.uniform()
        r = math.sqrt(u * (band[1] ** 2 - band[0] ** 2) + band[0] ** 2)
        cand = (geom.apex[0] + r * math.cos(ang), geom.apex[1] + r * math.sin(ang))
        if 0 <= cand[0] <= h - 1 and 0 <= cand[1] <= w - 1:
            center = cand
            break
    if center is None:
        raise PlacementError(f"sub-sector empty at level {p.level!r} edge {p.edge!r} "
                             f"for image {image_shape}")

    # long axis of the patch (its sigma_h direction) turned onto the local
    # radial direction, i.e. orthogonal to the lateral direction at the center
    phi_deg = math.degrees(math.atan2(center[1] - geom.apex[1], center[0] - geom.apex[0]))
    rotation = phi_deg - 90.0

    px_per_frame = cal.pixels_per_frame(p.velocity_cm_s)
    direction = -1.0 if p.edge == "right" else 1.0  # toward the sector interior
    steps = np.arange(frames, dtype=np.float64)
    centers = np.empty((frames, 2), dtype=np.float64)
    centers[:, 0] = center[0]
    centers[:, 1] = center[1] + direction * px_per_frame * steps
    return PlacedClutter(spec=spec, component="rl", centers=centers,
                         rotation_deg=rotation, frames=frames)


def rotate_patch(values: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate a patch raster about its center by bilinear resampling.

    A source offset (0, d) along +col maps to (-d sin a, d cos a) in the
    output, with zero fill outside the source support.
    """
    if angle_deg % 360.0 == 0.0:
        return values.copy()
    a = math.radians(angle_deg)
    ca, sa = math.cos(a), math.sin(a)
    sh, sw = values.shape
    rv, rh = sh // 2, sw // 2
    out_rv = int(math.ceil(abs(ca) * rv + abs(sa) * rh))
    out_rh = int(math.ceil(abs(sa) * rv + abs(ca) * rh))
    orows = np.arange(-out_rv, out_rv + 1, dtype=np.float64)[:, None]
    ocols = np.arange(-out_rh, out_rh + 1, dtype=np.float64)[None, :]
    # inverse map: src = R(-a) @ dst
    src_r = ca * orows + sa * ocols + rv
    src_c = -sa * orows + ca * ocols + rh
    r0 = np.floor(src_r).astype(np.int64)
    c0 = np.floor(src_c).astype(np.int64)
    fr = src_r - r0
    fc = src_c - c0
    out = np.zeros(src_r.shape, dtype=np.float64)
    for dr_i, dc_i, wgt in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                            (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
        rr = r0 + dr_i
        cc = c0 + dc_i
        valid = (rr >= 0) & (rr < sh) & (cc >= 0) & (cc < sw)
        out[valid] += wgt[valid] * values[rr[valid], cc[valid]]
    return out


def _shift_patch(values: np.ndarray, frac_r: float, frac_c: float) -> np.ndarray:
    """Sub-pixel bilinear shift; pads by one pixel so total mass is preserved."""
    ph, pw = values.shape
    out = np.zeros((ph + 1, pw + 1), dtype=np.float64)
    w00 = (1 - frac_r) * (1 - frac_c)
    w01 = (1 - frac_r) * frac_c
    w10 = frac_r * (1 - frac_c)
    w11 = frac_r * frac_c
    out[:ph, :pw] += w00 * values
    out[:ph, 1:] += w01 * values
    out[1:, :pw] += w10 * values
    out[1:, 1:] += w11 * values
    return out


def render_clutter_volume(placed: PlacedClutter, h: int, w: int, frames: int) -> np.ndarray:
    """Rasterize a placed component into an (H, W, F) float64 volume."""
    if frames != placed.frames:
        raise DimensionError(f"frame count {frames} != placement frames {placed.frames}")
    params = placed.spec.nf if placed.component == "nf" else placed.spec.rl
    if params is None:
        raise ContractError(f"spec lacks parameters for component {placed.component!r}")
    patch = gaussian_patch(params.sigma_v, params.sigma_h, params.gain).values
    if placed.rotation_deg:
        patch = rotate_patch(patch, placed.rotation_deg)
    rv, rh = patch.shape[0] // 2, patch.shape[1] // 2

    volume = np.zeros((h, w, frames), dtype=np.float64)
    static = bool(np.all(placed.centers == placed.centers[0]))
    shifted = None
    for f in range(frames):
        cr, cc = placed.centers[f]
        ri = math.floor(cr)
        ci = math.floor(cc)
        if shifted is None or not static:
            shifted = _shift_patch(patch, cr - ri, cc - ci)
        top, left = ri - rv, ci - rh
        sh, sw = shifted.shape
        r0, r1 = max(0, top), min(h, top + sh)
        c0, c1 = max(0, left), min(w, left + sw)
        if r0 >= r1 or c0 >= c1:
            continue
        volume[r0:r1, c0:c1, f] += shifted[r0 - top:r1 - top, c0 - left:c1 - left]
    return volume


def superimpose(clean: Sequence, clutter_volume: np.ndarray, geom: SectorGeometry,
                mask_threshold: float = DEFAULT_SIM_CONFIG.mask_threshold):
    """Add clutter inside the sector with saturation; return (cluttered, mask).

    The cluttered output is min(clean + clutter, 1) inside the sector and
    exactly zero outside it.  The mask marks clutter pixels above the
    threshold, restricted to the sector.
    """
    if clutter_volume.shape != clean.shape:
        raise DimensionError(f"clutter volume shape {clutter_volume.shape} != "
                             f"sequence shape {clean.shape}")
    h, w, _ = clean.shape
    sector = sector_mask(geom, h, w)
    summed = np.minimum(clean.data.astype(np.float64) + clutter_volume, 1.0)
    summed[~sector] = 0.0
    mask = (clutter_volume > mask_threshold) & sector[:, :, None]
    return Sequence(summed.astype(np.float32)), mask


def time_shift_pair(inp: Sequence, target: Sequence, p: float, seed: int):
    """Cyclically shift both sequences in time by one seeded draw.

    With probability `p` the pair is rotated to start at a uniformly chosen
    frame in [1, F] (1-based); otherwise it is returned unshifted.  Both
    members always receive the identical shift.
    """
    if inp.frames != target.frames:
        raise DimensionError(f"frame counts differ: {inp.frames} != {target.frames}")
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"probability must lie in [0, 1], got {p}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & (2**64 - 1))))
    f = inp.frames
    start = 1
    if p > 0.0 and rng.random() < p:
        start = int(rng.integers(1, f + 1))
    if start == 1:
        return inp, target, 1
    shift = -(start - 1)
    return (Sequence(np.roll(inp.data, shift, axis=2)),
            Sequence(np.roll(target.data, shift, axis=2)),
            start)
