"""Virtual microphone-array scenes: propagation, reverberation, noise.

A source waveform is rendered to an M-channel recording either in free
field (per-channel delay + 1/r attenuation) or inside a shoebox room via
the image-source method, where each reflection of order k is attenuated
by ``(1 - absorption)**k`` on top of its own spherical spreading. Additive
noise is injected at an exact signal-to-noise ratio.

Coordinates: array geometries are array-centered (centroid at the
origin). Free-field source positions use array coordinates; with a
:class:`RoomSpec` the room's corner is the origin and the array center is
placed at ``room.array_center_pos``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import delay_signal
from .synth import ClassLabel, MonoSignal

SPEED_OF_SOUND = 343.0
MIN_DISTANCE_M = 0.05   # clamps the 1/r singularity
GOLDEN_ANGLE_RAD = np.pi * (3.0 - np.sqrt(5.0))

TABLE_ROOM_SIZES = ((20.0, 10.0, 20.0), (30.0, 15.0, 30.0), (40.0, 20.0, 40.0), (50.0, 25.0, 50.0))


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone positions (meters, array-centered) and the sound speed."""

    positions: np.ndarray        # (M, 3)
    speed_of_sound_c: float = SPEED_OF_SOUND
    name: str = "custom"

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        object.__setattr__(self, "positions", pos)
        if pos.ndim != 2 or pos.shape[1] != 3 or pos.shape[0] < 1:
            raise ValueError("positions must be (M, 3) with M >= 1")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        centroid = pos.mean(axis=0)
        if np.any(np.abs(centroid) > 1e-9):
            raise ValueError(f"array centroid {centroid} is not at the origin")
        if self.speed_of_sound_c <= 0:
            raise ValueError("speed of sound must be positive")

    @property
    def n_channels(self) -> int:
        return self.positions.shape[0]


def make_array(preset_name: str = "fx112", n_channels: int = 112, speed_of_sound_c: float = SPEED_OF_SOUND) -> ArrayGeometry:
    """Build a deterministic array layout.

    ``"fx112"`` places channels on a Fermat spiral of 0.10 m outer radius in
    the z=0 plane; ``"single"`` is one microphone at the origin.
    """
    if n_channels < 1:
        raise ValueError("n_channels must be >= 1")
    if preset_name == "single":
        if n_channels != 1:
            raise ValueError("preset 'single' requires n_channels == 1")
        pos = np.zeros((1, 3))
    elif preset_name == "fx112":
        radius = 0.098
        i = np.arange(n_channels, dtype=np.float64)
        r = radius * np.sqrt(i / max(n_channels - 1, 1))
        theta = i * GOLDEN_ANGLE_RAD
        pos = np.stack([r * np.cos(theta), r * np.sin(theta), np.zeros_like(r)], axis=1)
        pos -= pos.mean(axis=0)
    else:
        raise ValueError(f"unknown array preset {preset_name!r}")
    return ArrayGeometry(pos, speed_of_sound_c, name=preset_name)


@dataclass(frozen=True)
class RoomSpec:
    """Shoebox room with uniform wall absorption and scene placements."""

    width_w: float
    length_l: float
    height_h: float
    absorption: float = 0.3
    max_image_order: int = 2
    array_center_pos: tuple[float, float, float] = (0.0, 0.0, 0.0)
    source_pos: tuple[float, float, float] | None = None

    def __post_init__(self):
        if min(self.width_w, self.length_l, self.height_h) <= 0:
            raise ValueError("room dimensions must be positive")
        if not (0.0 < self.absorption <= 1.0):
            raise ValueError("absorption must lie in (0, 1]")
        if self.max_image_order < 0:
            raise ValueError("max_image_order must be >= 0")

    @property
    def dims(self) -> np.ndarray:
        return np.array([self.width_w, self.length_l, self.height_h])

    def contains(self, point: np.ndarray) -> bool:
        p = np.asarray(point, dtype=np.float64)
        return bool(np.all(p > 0) and np.all(p < self.dims))

    @classmethod
    def centered(cls, width_w: float, length_l: float, height_h: float, source_offset=(0.0, 0.0, 1.0), **kwargs) -> "RoomSpec":
        """Room with the array at its center and the source offset from it."""
        center = (width_w / 2, length_l / 2, height_h / 2)
        source = tuple(np.asarray(center) + np.asarray(source_offset, dtype=np.float64))
        return cls(width_w, length_l, height_h, array_center_pos=center, source_pos=source, **kwargs)


@dataclass(frozen=True)
class MultichannelRecording:
    """Synchronized M-channel waveform block (channel-major)."""

    channels: np.ndarray          # (M, N)
    sample_rate_hz: int
    geometry: ArrayGeometry
    label: ClassLabel

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=np.float64)
        object.__setattr__(self, "channels", ch)
        if ch.ndim != 2:
            raise ValueError("channels must be (M, N)")
        if ch.shape[0] != self.geometry.n_channels:
            raise ValueError(
                f"{ch.shape[0]} channel rows != geometry's {self.geometry.n_channels} microphones"
            )
        if not np.all(np.isfinite(ch)):
            raise ValueError("channels contain non-finite values")

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]


def _image_sources(source_pos: np.ndarray, room: RoomSpec) -> list[tuple[np.ndarray, int]]:
    """All image-source positions with total reflection order <= max order."""
    per_axis: list[list[tuple[float, int]]] = []
    for axis, size in enumerate(room.dims):
        s = source_pos[axis]
        entries = []
        m_range = room.max_image_order // 2 + 1
        for m in range(-m_range, m_range + 1):
            for parity in (0, 1):
                coord = 2.0 * m * size + (s if parity == 0 else -s)
                order = abs(2 * m) if parity == 0 else abs(2 * m - 1)
                if order <= room.max_image_order:
                    entries.append((coord, order))
        per_axis.append(entries)
    images = []
    for cx, ox in per_axis[0]:
        for cy, oy in per_axis[1]:
            if ox + oy > room.max_image_order:
                continue
            for cz, oz in per_axis[2]:
                if ox + oy + oz <= room.max_image_order:
                    images.append((np.array([cx, cy, cz]), ox + oy + oz))
    return images


def _render_path(out: np.ndarray, x: np.ndarray, src: np.ndarray, mic: np.ndarray, c: float, fs: int, gain: float) -> None:
    dist = float(np.linalg.norm(src - mic))
    if dist == 0.0:
        raise ValueError("source coincides with a microphone (singular 1/r)")
    delay_samples = dist / c * fs
    out += (gain / max(dist, MIN_DISTANCE_M)) * delay_signal(x, delay_samples)


def propagate(
    source: MonoSignal,
    source_pos,
    geometry: ArrayGeometry,
    room: RoomSpec | None = None,
) -> MultichannelRecording:
    """Render a point source to every microphone of the array.

    Free field (``room=None``): channel m is the source delayed by
    ``|source_pos - p_m| / c`` and scaled by ``1 / max(r, 0.05 m)``.
    With a room, the same rendering is summed over all image sources up to
    ``room.max_image_order``, each weighted by ``(1 - absorption)**order``;
    ``source_pos=None`` falls back to ``room.source_pos``.
    """
    if room is None:
        if source_pos is None:
            raise ValueError("source_pos is required without a room")
        src = np.asarray(source_pos, dtype=np.float64)
        mics = geometry.positions
    else:
        src = np.asarray(room.source_pos if source_pos is None else source_pos, dtype=np.float64)
        mics = np.asarray(room.array_center_pos, dtype=np.float64)[None, :] + geometry.positions
        if not room.contains(src):
            raise ValueError(f"source {src} lies outside the room")
        for mic in mics:
            if not room.contains(mic):
                raise ValueError(f"microphone {mic} lies outside the room")
    if src.shape != (3,):
        raise ValueError("source_pos must be a 3-vector")

    x = source.samples
    fs = source.sample_rate_hz
    c = geometry.speed_of_sound_c
    out = np.zeros((geometry.n_channels, x.shape[0]))

    if room is None:
        paths = [(src, 1.0)]
    else:
        paths = []
        for img_pos, order in _image_sources(src, room):
            gain = (1.0 - room.absorption) ** order
            if gain != 0.0:
                paths.append((img_pos, gain))

    for m, mic in enumerate(mics):
        for img_pos, gain in paths:
            _render_path(out[m], x, img_pos, mic, c, fs, gain)

    return MultichannelRecording(out, fs, geometry, source.label)


def measure_snr(signal_power: float, noise_power: float) -> float:
    """Signal-to-noise ratio ``10*log10(P_s / P_n)`` in dB."""
    if signal_power <= 0 or noise_power <= 0:
        raise ValueError("powers must be positive")
    return 10.0 * np.log10(signal_power / noise_power)


def make_noise(shape: tuple[int, ...], target_power: float, noise_kind: str = "gaussian", seed: int = 0) -> np.ndarray:
    """Zero-mean noise with exactly the requested empirical mean-square power."""
    if target_power <= 0:
        raise ValueError("target_power must be positive")
    rng = np.random.default_rng(seed)
    if noise_kind == "gaussian":
        noise = rng.standard_normal(shape)
    elif noise_kind == "uniform":
        noise = rng.uniform(-1.0, 1.0, size=shape)
    else:
        raise ValueError(f"unknown noise_kind {noise_kind!r}")
    empirical = np.mean(noise**2)
    return noise * np.sqrt(target_power / empirical)


def add_noise_at_snr(
    rec: MultichannelRecording,
    snr_db: float,
    noise_kind: str = "gaussian",
    seed: int = 0,
) -> MultichannelRecording:
    """Add per-channel independent noise at an exact SNR.

    Signal power is the mean squared amplitude over all channels and
    samples; the injected noise is rescaled to its exact empirical power so
    that ``measure_snr(P_s, P_n)`` reproduces ``snr_db`` to float precision.
    """
    p_signal = float(np.mean(rec.channels**2))
    if p_signal == 0.0:
        raise ValueError("recording is all zeros; SNR undefined")
    p_noise = p_signal * 10.0 ** (-snr_db / 10.0)
    noise = make_noise(rec.channels.shape, p_noise, noise_kind, seed)
    return MultichannelRecording(rec.channels + noise, rec.sample_rate_hz, rec.geometry, rec.label)
