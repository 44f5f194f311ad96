"""Synthetic single-channel source waveforms for the five hazard classes.

Three partial-discharge types (corona, surface, floating) are modelled as
mains-phase-locked trains of exponentially damped ultrasonic wavelets, a gas
leak as band-limited noise with slow amplitude modulation, and background as
white noise with optional low-frequency machinery tones.

All generators are pure functions of their :class:`SourceSpec`: the same spec
(including seed) always yields the bit-identical waveform, and scaling
``spec.amplitude`` scales every sample exactly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

DEFAULT_SAMPLE_RATE = 96_000
DEFAULT_DURATION_S = 10.0

# leak_rate_scale -> (amplitude factor, upper band edge factor)
LEAK_RATE_FACTORS = {0.2: (0.5, 0.8), 0.5: (0.8, 0.9), 1.0: (1.0, 1.0)}


class ClassLabel(enum.IntEnum):
    """The five signal classes; integer values fix the one-hot ordering."""

    CORONA = 0
    SURFACE = 1
    FLOATING = 2
    GAS_LEAK = 3
    BACKGROUND = 4

    @property
    def display_name(self) -> str:
        return _DISPLAY_NAMES[self]

    @classmethod
    def from_name(cls, name: str) -> "ClassLabel":
        key = name.strip().lower().replace("-", "_").replace(" ", "_")
        for label, display in _DISPLAY_NAMES.items():
            if key in (label.name.lower(), display.lower(), display.lower().replace(" ", "_")):
                return label
        raise ValueError(f"unknown class label: {name!r}")


_DISPLAY_NAMES = {
    ClassLabel.CORONA: "Corona",
    ClassLabel.SURFACE: "Surface",
    ClassLabel.FLOATING: "Floating",
    ClassLabel.GAS_LEAK: "GasLeak",
    ClassLabel.BACKGROUND: "Background",
}

DISCHARGE_CLASSES = (ClassLabel.CORONA, ClassLabel.SURFACE, ClassLabel.FLOATING)

N_CLASSES = len(ClassLabel)


@dataclass(frozen=True)
class MonoSignal:
    """A single-channel sampled waveform with label metadata."""

    samples: np.ndarray
    sample_rate_hz: int
    label: ClassLabel
    duration_s: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        expected = int(round(self.duration_s * self.sample_rate_hz))
        if samples.ndim != 1 or samples.shape[0] != expected:
            raise ValueError(
                f"sample count {samples.shape} does not match duration "
                f"{self.duration_s} s at {self.sample_rate_hz} Hz (expected {expected})"
            )
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain non-finite values")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class SourceSpec:
    """Parameters for one synthetic source clip."""

    label: ClassLabel
    rng_seed: int = 0
    amplitude: float = 1.0
    duration_s: float = DEFAULT_DURATION_S
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE
    # gas leak
    band_lo_hz: float = 20_000.0
    band_hi_hz: float = 48_000.0
    leak_rate_scale: float = 1.0
    am_rate_hz: float = 1.0          # slow turbulence modulation, 0.5-2 Hz
    am_depth: float = 0.5
    n_spectral_bumps: int = 3        # smooth in-band colouration
    # discharge
    mains_hz: float = 60.0
    pulses_per_cycle: int = 1
    pulse_decay_s: float = 0.2e-3
    carrier_lo_hz: float = 25_000.0
    carrier_hi_hz: float = 45_000.0
    carrier_fixed: bool = False      # one shared carrier per clip (floating-gap resonance)
    pulse_gain_jitter: float = 0.2   # lognormal sigma of per-pulse amplitude
    phase_jitter_deg: float = 3.0    # floating only
    # background
    tone_freqs_hz: tuple[float, ...] = ()
    tone_level: float = 0.0

    def with_amplitude(self, amplitude: float) -> "SourceSpec":
        return replace(self, amplitude=amplitude)


def _validate_common(spec: SourceSpec) -> None:
    if spec.amplitude < 0:
        raise ValueError("amplitude must be >= 0")
    if spec.duration_s <= 0:
        raise ValueError("duration_s must be positive")
    if spec.sample_rate_hz <= 0:
        raise ValueError("sample_rate_hz must be positive")
    if spec.pulses_per_cycle < 1:
        raise ValueError("pulses_per_cycle must be >= 1")


def generate(spec: SourceSpec) -> MonoSignal:
    """Dispatch to the generator for ``spec.label``."""
    if spec.label == ClassLabel.GAS_LEAK:
        return gen_gas_leak(spec)
    if spec.label == ClassLabel.BACKGROUND:
        return gen_background(spec)
    return gen_discharge(spec)


def gen_gas_leak(spec: SourceSpec) -> MonoSignal:
    """Band-limited Gaussian noise with slow amplitude modulation.

    The spectrum is shaped by a hard band mask plus a few smooth in-band
    bumps, so at least 90% of the energy stays inside
    ``[band_lo_hz, band_hi_hz]`` (the AM sidebands leak only a few Hz).
    """
    _validate_common(spec)
    if spec.label != ClassLabel.GAS_LEAK:
        raise ValueError(f"gen_gas_leak requires GasLeak spec, got {spec.label.display_name}")
    if spec.leak_rate_scale not in LEAK_RATE_FACTORS:
        raise ValueError(
            f"leak_rate_scale must be one of {sorted(LEAK_RATE_FACTORS)}, got {spec.leak_rate_scale}"
        )
    amp_factor, edge_factor = LEAK_RATE_FACTORS[spec.leak_rate_scale]
    band_lo = spec.band_lo_hz
    band_hi = spec.band_hi_hz * edge_factor
    nyquist = spec.sample_rate_hz / 2
    if not (0.0 < band_lo < band_hi):
        raise ValueError(f"need 0 < band_lo < band_hi, got [{band_lo}, {band_hi}] Hz")
    if band_hi > nyquist:
        raise ValueError(f"band_hi {band_hi} Hz exceeds Nyquist {nyquist} Hz")

    rng = np.random.default_rng(spec.rng_seed)
    n = int(round(spec.duration_s * spec.sample_rate_hz))
    white = rng.standard_normal(n)

    freqs = np.fft.rfftfreq(n, d=1.0 / spec.sample_rate_hz)
    shape = np.zeros_like(freqs)
    in_band = (freqs >= band_lo) & (freqs <= band_hi)
    shape[in_band] = 1.0
    # smooth colouration inside the band, so different clips have
    # recognisably different spectra
    for _ in range(spec.n_spectral_bumps):
        center = rng.uniform(band_lo, band_hi)
        width = rng.uniform(0.05, 0.25) * (band_hi - band_lo)
        gain = rng.uniform(0.5, 2.0)
        shape[in_band] += gain * np.exp(-0.5 * ((freqs[in_band] - center) / width) ** 2)

    spectrum = np.fft.rfft(white) * shape
    noise = np.fft.irfft(spectrum, n=n)

    t = np.arange(n) / spec.sample_rate_hz
    am_phase = rng.uniform(0, 2 * np.pi)
    envelope = 1.0 + spec.am_depth * np.sin(2 * np.pi * spec.am_rate_hz * t + am_phase)
    signal = noise * envelope

    rms = np.sqrt(np.mean(signal**2))
    if rms > 0:
        signal = signal / rms
    # amplitude is the final multiply so scaling it scales samples exactly
    samples = (signal * amp_factor) * spec.amplitude
    return MonoSignal(samples, spec.sample_rate_hz, spec.label, spec.duration_s)


def _damped_wavelet(n_taps: int, carrier_hz: float, decay_s: float, fs: int) -> np.ndarray:
    t = np.arange(n_taps) / fs
    return np.exp(-t / decay_s) * np.sin(2 * np.pi * carrier_hz * t)


def _pulse_phases_deg(spec: SourceSpec, n_cycles: int, rng: np.random.Generator) -> np.ndarray:
    """Per-cycle onset phases (degrees), shaped (n_cycles, pulses_per_cycle)."""
    k = spec.pulses_per_cycle
    if spec.label == ClassLabel.CORONA:
        # clustered near the 270 deg voltage peak
        return rng.normal(270.0, 8.0, size=(n_cycles, k))
    if spec.label == ClassLabel.SURFACE:
        # both half-cycles, broad spread
        centers = np.where(rng.random((n_cycles, k)) < 0.5, 90.0, 270.0)
        return centers + rng.normal(0.0, 40.0, size=(n_cycles, k))
    # floating: quasi-regular grid with low jitter
    offset = rng.uniform(0.0, 360.0 / k)
    grid = offset + np.arange(k) * (360.0 / k)
    return grid[None, :] + rng.normal(0.0, spec.phase_jitter_deg, size=(n_cycles, k))


def gen_discharge(spec: SourceSpec) -> MonoSignal:
    """Mains-phase-locked train of damped ultrasonic wavelets.

    Corona pulses cluster near one voltage peak, surface discharges occupy
    both half-cycles with broad phase spread, and floating discharges sit on
    a quasi-regular phase grid with low jitter.
    """
    _validate_common(spec)
    if spec.label not in DISCHARGE_CLASSES:
        raise ValueError(f"gen_discharge requires a discharge class, got {spec.label.display_name}")
    if spec.mains_hz <= 0:
        raise ValueError("mains_hz must be positive")
    if spec.carrier_hi_hz > spec.sample_rate_hz / 2:
        raise ValueError("carrier band exceeds Nyquist")

    rng = np.random.default_rng(spec.rng_seed)
    fs = spec.sample_rate_hz
    n = int(round(spec.duration_s * fs))
    cycle_s = 1.0 / spec.mains_hz
    n_cycles = int(np.ceil(spec.duration_s / cycle_s))

    phases = _pulse_phases_deg(spec, n_cycles, rng)
    cycle_starts = np.arange(n_cycles)[:, None] * cycle_s
    onsets_s = cycle_starts + (phases % 360.0) / 360.0 * cycle_s

    if spec.carrier_fixed:
        carriers = np.full(phases.shape, rng.uniform(spec.carrier_lo_hz, spec.carrier_hi_hz))
    else:
        carriers = rng.uniform(spec.carrier_lo_hz, spec.carrier_hi_hz, size=phases.shape)
    gains = np.exp(rng.normal(0.0, spec.pulse_gain_jitter, size=phases.shape))

    wavelet_len = int(round(5 * spec.pulse_decay_s * fs))
    signal = np.zeros(n + wavelet_len)
    for onset_s, carrier, gain in zip(onsets_s.ravel(), carriers.ravel(), gains.ravel()):
        start = int(round(onset_s * fs))
        if start >= n:
            continue
        signal[start : start + wavelet_len] += gain * _damped_wavelet(
            wavelet_len, carrier, spec.pulse_decay_s, fs
        )
    signal = signal[:n]

    rms = np.sqrt(np.mean(signal**2))
    if rms > 0:
        signal = signal / rms
    samples = signal * spec.amplitude
    return MonoSignal(samples, fs, spec.label, spec.duration_s)


def gen_background(spec: SourceSpec) -> MonoSignal:
    """White Gaussian noise, optionally with low-frequency machinery tones.

    Tones must sit below 20 kHz; they exist so the band-pass stage has
    something to reject.
    """
    _validate_common(spec)
    if spec.label != ClassLabel.BACKGROUND:
        raise ValueError(f"gen_background requires Background spec, got {spec.label.display_name}")
    if any(f >= 20_000.0 for f in spec.tone_freqs_hz):
        raise ValueError("machinery tones must stay below 20 kHz")

    rng = np.random.default_rng(spec.rng_seed)
    n = int(round(spec.duration_s * spec.sample_rate_hz))
    signal = rng.standard_normal(n)
    if spec.tone_freqs_hz and spec.tone_level > 0:
        t = np.arange(n) / spec.sample_rate_hz
        for freq in spec.tone_freqs_hz:
            phase = rng.uniform(0, 2 * np.pi)
            signal = signal + spec.tone_level * np.sin(2 * np.pi * freq * t + phase)
    samples = signal * spec.amplitude
    return MonoSignal(samples, spec.sample_rate_hz, spec.label, spec.duration_s)
