"""Sector field-of-view geometry and physical calibration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class SectorGeometry:
    """Downward-opening cone: apex pixel, half opening angle, radial extent."""

    apex: tuple[float, float]  # (row, col)
    half_angle_deg: float
    radius: float

    def __post_init__(self):
        if not 0.0 < self.half_angle_deg < 90.0:
            raise ParameterError(f"half angle must be in (0, 90) degrees, "
                                 f"got {self.half_angle_deg}")
        if self.radius <= 0:
            raise ParameterError(f"radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class PhysicalCalibration:
    cm_per_pixel: float
    seconds_per_frame: float

    def __post_init__(self):
        if self.cm_per_pixel <= 0 or self.seconds_per_frame <= 0:
            raise ParameterError("calibration values must be strictly positive")

    def pixels_per_frame(self, velocity_cm_s: float) -> float:
        """Convert a physical lateral velocity into a per-frame pixel displacement."""
        return velocity_cm_s / self.cm_per_pixel * self.seconds_per_frame


# Declared assumption: the source frames carry no physical depth metadata,
# so defaults approximate a 15 cm deep, 128 px sector at ~50 fps.
DEFAULT_CALIBRATION = PhysicalCalibration(cm_per_pixel=0.117, seconds_per_frame=0.02)


def default_geometry(height: int, width: int) -> SectorGeometry:
    """Apex at top-center, 45 degree half angle, radius equal to the image height."""
    return SectorGeometry(apex=(0.0, width / 2.0), half_angle_deg=45.0, radius=float(height))


def sector_mask(geom: SectorGeometry, h: int, w: int) -> np.ndarray:
    """Boolean (H, W) mask of pixel centers inside the sector cone.

    A pixel is inside iff it lies at or below the apex row, within
    `half_angle_deg` of the downward axis, and within `radius` of the apex.
    Equal geometries always produce identical masks.
    """
    rows = np.arange(h, dtype=np.float64)[:, None]
    cols = np.arange(w, dtype=np.float64)[None, :]
    dr = rows - geom.apex[0]
    dc = cols - geom.apex[1]
    dist = np.hypot(dr, dc)
    angle = np.degrees(np.arctan2(np.abs(dc), dr))  # 0 along the downward axis
    return (dr >= 0) & (angle <= geom.half_angle_deg) & (dist <= geom.radius)
