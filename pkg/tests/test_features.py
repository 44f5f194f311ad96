"""Feature pipeline tests: STFT convention, band bins, gamma, windows."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from echowatch.features import (
    FeatureParams,
    Spectrogram,
    StftParams,
    band_bin_range,
    bandpass_bins,
    extract_windows,
    gamma_correct,
    normalize01,
    slide,
    stft,
)
from echowatch.synth import ClassLabel, MonoSignal, SourceSpec, gen_background

FS = 96_000


def direct_dft_magnitude(frame: np.ndarray) -> np.ndarray:
    """Naive DFT oracle for one windowed frame (un-normalized forward)."""
    n = frame.shape[0]
    k = np.arange(n // 2 + 1)
    basis = np.exp(-2j * np.pi * np.outer(k, np.arange(n)) / n)
    return np.abs(basis @ frame)


class TestStft:
    def test_zero_input(self):
        spec = stft(np.zeros(FS), StftParams())
        assert spec.mag.shape == (257, (FS - 512) // 128 + 1)
        assert np.all(spec.mag == 0.0)

    def test_frame_count_10s(self):
        spec = stft(np.zeros(960_000), StftParams())
        assert spec.n_frames == 7497

    def test_bin_center_sinusoid(self):
        k = 120
        t = np.arange(FS) / FS
        x = np.sin(2 * np.pi * (k * FS / 512) * t)
        spec = stft(x, StftParams())
        assert np.all(spec.mag.argmax(axis=0) == k)

    def test_against_direct_dft(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(2048)
        spec = stft(x, StftParams())
        frame = x[:512] * np.hamming(512)
        np.testing.assert_allclose(spec.mag[:, 0], direct_dft_magnitude(frame), rtol=1e-9, atol=1e-9)

    def test_parseval_per_frame(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(1024)
        spec = stft(x, StftParams())
        windowed = x[:512] * np.hamming(512)
        full_energy = spec.mag[0, 0] ** 2 + spec.mag[256, 0] ** 2 + 2 * np.sum(spec.mag[1:256, 0] ** 2)
        np.testing.assert_allclose(full_energy, 512 * np.sum(windowed**2), rtol=1e-6)

    def test_too_short_rejected(self):
        with pytest.raises(ValueError, match="shorter"):
            stft(np.zeros(100), StftParams())

    def test_rate_mismatch_rejected(self):
        sig = MonoSignal(np.zeros(48_000), 48_000, ClassLabel.BACKGROUND, 1.0)
        with pytest.raises(ValueError, match="rate"):
            stft(sig, StftParams())


class TestBandpass:
    def test_default_band_is_150_bins(self):
        spec = stft(np.zeros(FS), StftParams())
        banded = bandpass_bins(spec)
        assert banded.n_bins == 150
        assert banded.bin_offset == 107
        # oracle: ceil(20000/187.5)=107 .. floor(48000/187.5)=256
        assert band_bin_range(187.5, 257, 20_000, 48_000) == (107, 256)

    def test_full_band_identity(self):
        spec = stft(np.random.default_rng(0).standard_normal(FS), StftParams())
        full = bandpass_bins(spec, 0.0, 48_000.0)
        assert np.array_equal(full.mag, spec.mag)

    def test_machinery_tone_rejected_by_band(self):
        sig = gen_background(SourceSpec(ClassLabel.BACKGROUND, rng_seed=4, amplitude=0.0, duration_s=1.0))
        t = np.arange(FS) / FS
        tone = np.sin(2 * np.pi * 10_000 * t)
        spec = bandpass_bins(stft(tone + sig.samples, StftParams()))
        # the 10 kHz line sits below bin 107 and cannot contribute
        assert spec.mag.max() < 1.0

    def test_empty_band_rejected(self):
        spec = stft(np.zeros(FS), StftParams())
        with pytest.raises(ValueError):
            bandpass_bins(spec, 48_000.0, 50_000.0)

    def test_double_bandpass_rejected(self):
        spec = bandpass_bins(stft(np.zeros(FS), StftParams()))
        with pytest.raises(ValueError):
            bandpass_bins(spec, 20_000.0, 48_000.0)


class TestGamma:
    def _unit_spec(self, values) -> Spectrogram:
        return Spectrogram(np.asarray(values, dtype=np.float64), 187.5, 128 / FS)

    def test_identity_at_one(self):
        spec = self._unit_spec([[0.2, 0.7], [0.0, 1.0]])
        assert np.array_equal(gamma_correct(spec, 1.0).mag, spec.mag)

    def test_quarter_squared(self):
        spec = self._unit_spec([[0.25]])
        assert gamma_correct(spec, 2.0).mag[0, 0] == pytest.approx(0.0625)

    def test_gamma_two_attenuates(self):
        rng = np.random.default_rng(2)
        spec = self._unit_spec(rng.random((20, 20)))
        out = gamma_correct(spec, 2.0)
        assert np.all(out.mag <= spec.mag)

    def test_nonpositive_gamma_rejected(self):
        with pytest.raises(ValueError):
            gamma_correct(self._unit_spec([[0.5]]), 0.0)

    def test_unnormalized_input_rejected(self):
        with pytest.raises(ValueError, match="normalize"):
            gamma_correct(self._unit_spec([[2.0]]), 1.5)

    @given(gamma=st.floats(0.1, 5.0))
    @settings(max_examples=25, deadline=None)
    def test_monotone_ordering_preserved(self, gamma):
        rng = np.random.default_rng(7)
        a = rng.random(50)
        spec = self._unit_spec(a[None, :])
        out = gamma_correct(spec, gamma).mag[0]
        order_in = np.argsort(a, kind="stable")
        order_out = np.argsort(out, kind="stable")
        assert np.array_equal(order_in, order_out)

    def test_normalize01_range_and_constant(self):
        rng = np.random.default_rng(3)
        spec = Spectrogram(rng.random((5, 5)) * 7 + 1, 187.5, 1e-3)
        normed = normalize01(spec)
        assert normed.mag.min() == 0.0 and normed.mag.max() == 1.0
        flat = normalize01(Spectrogram(np.full((3, 3), 4.2), 187.5, 1e-3))
        assert np.all(flat.mag == 0.0)


class TestSlide:
    def _spec(self, t, f=10) -> Spectrogram:
        rng = np.random.default_rng(t)
        return Spectrogram(rng.random((f, t)), 187.5, 128 / FS)

    def test_t40_three_windows(self):
        spec = self._spec(40)
        batch = slide(spec)
        assert batch.n_windows == 3
        for i, origin in enumerate([0, 8, 16]):
            assert batch.origin_frame(i) == origin
            assert np.array_equal(batch.windows[i], spec.mag[:, origin : origin + 24])

    def test_t24_single_window(self):
        assert slide(self._spec(24)).n_windows == 1

    def test_full_clip_window_count(self):
        # floor((7497 - 24) / 8) + 1
        assert slide(self._spec(7497, f=2)).n_windows == 935

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            slide(self._spec(23))

    def test_index_reconstruction_exact(self):
        spec = self._spec(100)
        batch = slide(spec)
        for i in range(batch.n_windows):
            assert np.array_equal(batch.windows[i], spec.mag[:, 8 * i : 8 * i + 24])


class TestPipeline:
    def test_window_shape_and_determinism(self):
        sig = gen_background(SourceSpec(ClassLabel.BACKGROUND, rng_seed=5, duration_s=1.0))
        params = FeatureParams()
        a = extract_windows(sig, params)
        b = extract_windows(sig, params)
        assert a.windows.shape[1:] == (150, 24)
        assert np.array_equal(a.windows, b.windows)
        assert params.window_shape == (150, 24)

    def test_outputs_in_unit_range(self):
        sig = gen_background(SourceSpec(ClassLabel.BACKGROUND, rng_seed=6, duration_s=1.0))
        batch = extract_windows(sig, FeatureParams())
        assert batch.windows.min() >= 0.0 and batch.windows.max() <= 1.0
