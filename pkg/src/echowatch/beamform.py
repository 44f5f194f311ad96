"""Time-domain delay-and-sum beamforming with pixel-derived steering.

A steering direction is a unit vector in array coordinates, obtained
either directly or from camera pixel coordinates through a pinhole model.
Per-channel delays are the far-field ``p_m . u / c``; the beamformer
compensates them with the shared fractional-delay interpolator and forms
the weighted channel sum, coherently amplifying the steered direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsp import delay_signal
from .scene import ArrayGeometry, MultichannelRecording
from .synth import MonoSignal


@dataclass(frozen=True)
class SteeringDirection:
    """Unit vector in array coordinates."""

    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        object.__setattr__(self, "u", u)
        if u.shape != (3,):
            raise ValueError("steering vector must be a 3-vector")
        norm = np.linalg.norm(u)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"steering vector norm {norm} != 1")

    @classmethod
    def from_vector(cls, v) -> "SteeringDirection":
        v = np.asarray(v, dtype=np.float64)
        norm = np.linalg.norm(v)
        if norm == 0:
            raise ValueError("cannot steer along the zero vector")
        return cls(v / norm)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera whose optical axis is the array's +z direction."""

    width_px: int = 640
    height_px: int = 480
    hfov_deg: float = 60.0
    vfov_deg: float = 45.0
    mounting: np.ndarray = field(default_factory=lambda: np.eye(3))  # camera -> array rotation

    def __post_init__(self):
        mounting = np.asarray(self.mounting, dtype=np.float64)
        object.__setattr__(self, "mounting", mounting)
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("pixel dimensions must be positive")
        if not (0.0 < self.hfov_deg < 180.0 and 0.0 < self.vfov_deg < 180.0):
            raise ValueError("fields of view must lie in (0, 180) degrees")
        if mounting.shape != (3, 3):
            raise ValueError("mounting must be a 3x3 rotation matrix")


@dataclass(frozen=True)
class BeamWeights:
    """Per-channel weights; default is the uniform 1/M average."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        object.__setattr__(self, "w", w)
        if w.ndim != 1 or not np.all(np.isfinite(w)):
            raise ValueError("weights must be a finite 1-D vector")

    @classmethod
    def uniform(cls, n_channels: int) -> "BeamWeights":
        return cls(np.full(n_channels, 1.0 / n_channels))


def pixel_to_steering(px: float, py: float, cam: CameraModel = CameraModel()) -> SteeringDirection:
    """Map a pixel to its line-of-sight unit vector in array coordinates.

    The image center maps to the optical axis; the horizontal frame edge
    maps to half the horizontal field of view (tangent model: ``x/z =
    (px - cx)/fx``). Camera axes are x right, y down, z forward.
    """
    if not (0 <= px < cam.width_px) or not (0 <= py < cam.height_px):
        raise ValueError(f"pixel ({px}, {py}) outside {cam.width_px}x{cam.height_px} frame")
    cx, cy = cam.width_px / 2.0, cam.height_px / 2.0
    fx = cx / np.tan(np.deg2rad(cam.hfov_deg) / 2.0)
    fy = cy / np.tan(np.deg2rad(cam.vfov_deg) / 2.0)
    d_cam = np.array([(px - cx) / fx, (py - cy) / fy, 1.0])
    return SteeringDirection.from_vector(cam.mounting @ d_cam)


def steering_delays(geometry: ArrayGeometry, direction: SteeringDirection) -> np.ndarray:
    """Far-field arrival-time offsets ``tau_m = p_m . u / c`` in seconds."""
    return geometry.positions @ direction.u / geometry.speed_of_sound_c


def delay_and_sum(
    rec: MultichannelRecording,
    direction: SteeringDirection,
    weights: BeamWeights | None = None,
) -> MonoSignal:
    """Weighted sum of channels after compensating steering delays.

    Channel m is evaluated at ``t - tau_m``, so a plane wave arriving from
    ``direction`` (which reaches microphone m with advance ``tau_m``) sums
    coherently. Output length equals the input length, zero-padded where
    the shift runs past the edges.
    """
    if weights is None:
        weights = BeamWeights.uniform(rec.n_channels)
    if weights.w.shape[0] != rec.n_channels:
        raise ValueError(
            f"{weights.w.shape[0]} weights != {rec.n_channels} channels"
        )
    fs = rec.sample_rate_hz
    taus = steering_delays(rec.geometry, direction)
    out = np.zeros(rec.n_samples)
    for m in range(rec.n_channels):
        wm = weights.w[m]
        if wm == 0.0:
            continue
        out += wm * delay_signal(rec.channels[m], taus[m] * fs)
    return MonoSignal(out, fs, rec.label, rec.n_samples / fs)
