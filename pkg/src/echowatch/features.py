"""Waveform -> classifier-input feature pipeline.

Stages: magnitude STFT (Hamming window, un-normalized forward DFT),
band-pass by dropping frequency bins, per-clip min-max normalization,
gamma correction, and a sliding window over time frames.

At the defaults (96 kHz, n_fft 512, hop 128, band 20-48 kHz, window 24
frames / hop 8) a 10 s clip yields a 257x7497 spectrogram, 150 retained
bins, and 935 windows of shape 150x24.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .synth import MonoSignal

DEFAULT_BAND_HZ = (20_000.0, 48_000.0)
DEFAULT_GAMMA = 1.5
WINDOW_FRAMES = 24
WINDOW_HOP_FRAMES = 8


@dataclass(frozen=True)
class StftParams:
    n_fft: int = 512
    hop: int = 128
    sample_rate_hz: int = 96_000

    def __post_init__(self):
        if not (0 < self.hop <= self.n_fft):
            raise ValueError("need 0 < hop <= n_fft")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")

    @property
    def bin_hz(self) -> float:
        return self.sample_rate_hz / self.n_fft

    @property
    def frame_s(self) -> float:
        return self.hop / self.sample_rate_hz

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.n_fft:
            raise ValueError(f"signal of {n_samples} samples is shorter than one {self.n_fft}-sample frame")
        return (n_samples - self.n_fft) // self.hop + 1


@dataclass(frozen=True)
class Spectrogram:
    """Magnitude spectrogram: ``mag[f, t]`` with bin/frame resolution metadata."""

    mag: np.ndarray           # (F, T), nonnegative
    bin_hz: float
    frame_s: float
    band: tuple[float, float] | None = None   # applied band-pass, None = full
    bin_offset: int = 0       # index of mag[0] in the full-resolution spectrogram

    def __post_init__(self):
        mag = np.asarray(self.mag)
        object.__setattr__(self, "mag", mag)
        if mag.ndim != 2:
            raise ValueError("mag must be 2-D (bins x frames)")
        if not np.all(np.isfinite(mag)):
            raise ValueError("spectrogram contains non-finite values")
        if mag.size and mag.min() < 0:
            raise ValueError("magnitudes must be nonnegative")

    @property
    def n_bins(self) -> int:
        return self.mag.shape[0]

    @property
    def n_frames(self) -> int:
        return self.mag.shape[1]


@dataclass(frozen=True)
class WindowBatch:
    """Sliding-window slices of a spectrogram, ordered by origin frame."""

    windows: np.ndarray       # (n_windows, F, win_frames)
    stride_frames: int
    win_frames: int
    frame_s: float

    def __post_init__(self):
        w = np.asarray(self.windows)
        object.__setattr__(self, "windows", w)
        if w.ndim != 3:
            raise ValueError("windows must be (n, F, win_frames)")
        if w.shape[2] != self.win_frames:
            raise ValueError("window width mismatch")

    @property
    def n_windows(self) -> int:
        return self.windows.shape[0]

    def origin_frame(self, i: int) -> int:
        return i * self.stride_frames

    def center_time_s(self, i: int) -> float:
        """Center time of window i: frame (stride*i + win/2) in seconds."""
        return (i * self.stride_frames + self.win_frames / 2) * self.frame_s


def stft(signal: MonoSignal | np.ndarray, params: StftParams = StftParams()) -> Spectrogram:
    """Magnitude STFT with a Hamming window and no padding.

    Frames cover samples ``[t*hop, t*hop + n_fft)``; the transform is the
    plain un-normalized forward DFT, magnitude is ``|complex bin|``.
    """
    if isinstance(signal, MonoSignal):
        if signal.sample_rate_hz != params.sample_rate_hz:
            raise ValueError(
                f"signal rate {signal.sample_rate_hz} != params rate {params.sample_rate_hz}"
            )
        x = signal.samples
    else:
        x = np.asarray(signal, dtype=np.float64)
    x = np.ascontiguousarray(x)
    n_frames = params.n_frames(x.shape[0])
    frames = np.lib.stride_tricks.as_strided(
        x,
        shape=(n_frames, params.n_fft),
        strides=(x.strides[0] * params.hop, x.strides[0]),
    )
    window = np.hamming(params.n_fft)
    mag = np.abs(np.fft.rfft(frames * window, axis=1)).T  # (F, T)
    return Spectrogram(mag, bin_hz=params.bin_hz, frame_s=params.frame_s)


def band_bin_range(bin_hz: float, n_bins: int, f_lo: float, f_hi: float) -> tuple[int, int]:
    """Inclusive bin index range whose center frequencies lie in [f_lo, f_hi]."""
    nyquist = (n_bins - 1) * bin_hz
    if not (0 <= f_lo < f_hi):
        raise ValueError("need 0 <= f_lo < f_hi")
    if f_hi > nyquist + 1e-9:
        raise ValueError(f"f_hi {f_hi} Hz exceeds Nyquist {nyquist} Hz")
    k_lo = int(np.ceil(f_lo / bin_hz - 1e-9))
    k_hi = int(np.floor(f_hi / bin_hz + 1e-9))
    if k_hi < k_lo:
        raise ValueError(f"band [{f_lo}, {f_hi}] Hz contains no bin centers")
    return k_lo, k_hi


def bandpass_bins(spec: Spectrogram, f_lo: float = DEFAULT_BAND_HZ[0], f_hi: float = DEFAULT_BAND_HZ[1]) -> Spectrogram:
    """Retain only bins whose center frequency lies in ``[f_lo, f_hi]``."""
    if spec.bin_offset != 0 or spec.band is not None:
        raise ValueError("bandpass_bins expects a full-band spectrogram")
    k_lo, k_hi = band_bin_range(spec.bin_hz, spec.n_bins, f_lo, f_hi)
    return Spectrogram(
        spec.mag[k_lo : k_hi + 1],
        bin_hz=spec.bin_hz,
        frame_s=spec.frame_s,
        band=(f_lo, f_hi),
        bin_offset=k_lo,
    )


def normalize01(spec: Spectrogram) -> Spectrogram:
    """Per-clip min-max normalization to [0, 1] (constant input maps to 0)."""
    mag = spec.mag
    lo = mag.min() if mag.size else 0.0
    hi = mag.max() if mag.size else 0.0
    if hi > lo:
        out = (mag - lo) / (hi - lo)
    else:
        out = np.zeros_like(mag)
    return Spectrogram(out, spec.bin_hz, spec.frame_s, spec.band, spec.bin_offset)


def gamma_correct(spec: Spectrogram, gamma: float = DEFAULT_GAMMA) -> Spectrogram:
    """Element-wise power law on a [0, 1]-normalized spectrogram.

    gamma > 1 attenuates weak components relative to strong ones; gamma = 1
    is the identity. The input must already be min-max normalized (see
    :func:`normalize01`).
    """
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    mag = spec.mag
    if mag.size and (mag.min() < 0 or mag.max() > 1.0 + 1e-12):
        raise ValueError("gamma_correct expects values in [0, 1]; normalize first")
    if gamma == 1.0:
        return spec
    out = np.power(mag, gamma)
    return Spectrogram(out, spec.bin_hz, spec.frame_s, spec.band, spec.bin_offset)


def slide(spec: Spectrogram, win_frames: int = WINDOW_FRAMES, hop_frames: int = WINDOW_HOP_FRAMES) -> WindowBatch:
    """Slice the spectrogram into ``win_frames``-wide windows every ``hop_frames``.

    Window i covers frames ``[i*hop_frames, i*hop_frames + win_frames)``;
    the count is ``(T - win_frames) // hop_frames + 1``.
    """
    if win_frames <= 0 or hop_frames <= 0:
        raise ValueError("win_frames and hop_frames must be positive")
    t = spec.n_frames
    if t < win_frames:
        raise ValueError(f"spectrogram has {t} frames, shorter than one {win_frames}-frame window")
    n_windows = (t - win_frames) // hop_frames + 1
    idx = np.arange(n_windows)[:, None] * hop_frames + np.arange(win_frames)[None, :]
    windows = np.ascontiguousarray(np.transpose(spec.mag[:, idx], (1, 0, 2)))
    return WindowBatch(windows, stride_frames=hop_frames, win_frames=win_frames, frame_s=spec.frame_s)


@dataclass(frozen=True)
class FeatureParams:
    """End-to-end feature pipeline settings."""

    stft: StftParams = StftParams()
    band_lo_hz: float = DEFAULT_BAND_HZ[0]
    band_hi_hz: float = DEFAULT_BAND_HZ[1]
    gamma: float = DEFAULT_GAMMA
    win_frames: int = WINDOW_FRAMES
    hop_frames: int = WINDOW_HOP_FRAMES

    @property
    def n_band_bins(self) -> int:
        k_lo, k_hi = band_bin_range(
            self.stft.bin_hz, self.stft.n_fft // 2 + 1, self.band_lo_hz, self.band_hi_hz
        )
        return k_hi - k_lo + 1

    @property
    def window_shape(self) -> tuple[int, int]:
        return (self.n_band_bins, self.win_frames)


def extract_windows(signal: MonoSignal | np.ndarray, params: FeatureParams = FeatureParams()) -> WindowBatch:
    """Full pipeline: STFT -> band-pass -> normalize -> gamma -> slide."""
    spec = stft(signal, params.stft)
    spec = bandpass_bins(spec, params.band_lo_hz, params.band_hi_hz)
    spec = gamma_correct(normalize01(spec), params.gamma)
    return slide(spec, params.win_frames, params.hop_frames)
