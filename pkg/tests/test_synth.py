"""Source-generator tests: determinism, spectra, pulse-phase structure."""

import numpy as np
import pytest

from echowatch.synth import (
    ClassLabel,
    SourceSpec,
    gen_background,
    gen_discharge,
    gen_gas_leak,
    generate,
)

FS = 96_000


def band_energy_fraction(samples: np.ndarray, fs: int, f_lo: float, f_hi: float) -> float:
    """Direct DFT oracle: fraction of spectral energy inside [f_lo, f_hi]."""
    spectrum = np.abs(np.fft.rfft(samples)) ** 2
    freqs = np.fft.rfftfreq(samples.shape[0], d=1.0 / fs)
    total = spectrum.sum()
    in_band = spectrum[(freqs >= f_lo) & (freqs <= f_hi)].sum()
    return in_band / total


def detect_onset_phases(samples: np.ndarray, fs: int, mains_hz: float,
                        threshold_frac: float = 0.25, refractory_s: float = 1.5e-3) -> np.ndarray:
    """Threshold-crossing onset detector; returns onset phases in degrees."""
    env = np.abs(samples)
    # box smoothing over ~0.1 ms keeps the onset edge sharp
    k = max(int(0.1e-3 * fs), 1)
    env = np.convolve(env, np.ones(k) / k, mode="same")
    thresh = threshold_frac * env.max()
    above = env > thresh
    rising = np.nonzero(above[1:] & ~above[:-1])[0] + 1
    onsets = []
    last = -np.inf
    refractory = refractory_s * fs
    for idx in rising:
        if idx - last >= refractory:
            onsets.append(idx)
            last = idx
    t = np.array(onsets) / fs
    return (t % (1.0 / mains_hz)) * mains_hz * 360.0


def circular_std_deg(phases_deg: np.ndarray, period_deg: float) -> float:
    """Circular standard deviation of phases on a wrapped period."""
    ang = 2 * np.pi * phases_deg / period_deg
    r = np.abs(np.mean(np.exp(1j * ang)))
    return np.sqrt(-2 * np.log(max(r, 1e-12))) * period_deg / (2 * np.pi)


class TestGasLeak:
    def test_length_and_label(self):
        spec = SourceSpec(ClassLabel.GAS_LEAK, rng_seed=7)
        sig = gen_gas_leak(spec)
        assert sig.n_samples == 960_000
        assert sig.label == ClassLabel.GAS_LEAK

    def test_determinism(self):
        spec = SourceSpec(ClassLabel.GAS_LEAK, rng_seed=7)
        a = gen_gas_leak(spec)
        b = gen_gas_leak(spec)
        assert np.array_equal(a.samples, b.samples)

    def test_band_energy(self):
        spec = SourceSpec(ClassLabel.GAS_LEAK, rng_seed=3, band_lo_hz=25_000, band_hi_hz=30_000, duration_s=2.0)
        sig = gen_gas_leak(spec)
        assert band_energy_fraction(sig.samples, FS, 25_000, 30_000) >= 0.9

    def test_default_band_energy(self):
        sig = gen_gas_leak(SourceSpec(ClassLabel.GAS_LEAK, rng_seed=11, duration_s=2.0))
        assert band_energy_fraction(sig.samples, FS, 20_000, 48_000) >= 0.9

    def test_band_above_nyquist_rejected(self):
        spec = SourceSpec(ClassLabel.GAS_LEAK, band_lo_hz=40_000, band_hi_hz=50_000)
        with pytest.raises(ValueError, match="Nyquist"):
            gen_gas_leak(spec)

    def test_inverted_band_rejected(self):
        spec = SourceSpec(ClassLabel.GAS_LEAK, band_lo_hz=30_000, band_hi_hz=25_000)
        with pytest.raises(ValueError):
            gen_gas_leak(spec)

    def test_wrong_class_rejected(self):
        with pytest.raises(ValueError):
            gen_gas_leak(SourceSpec(ClassLabel.CORONA))

    def test_leak_rate_scale_validated(self):
        with pytest.raises(ValueError, match="leak_rate_scale"):
            gen_gas_leak(SourceSpec(ClassLabel.GAS_LEAK, leak_rate_scale=0.7))

    def test_leak_rate_scales_amplitude_and_band(self):
        lo = gen_gas_leak(SourceSpec(ClassLabel.GAS_LEAK, rng_seed=5, leak_rate_scale=0.2, duration_s=1.0))
        hi = gen_gas_leak(SourceSpec(ClassLabel.GAS_LEAK, rng_seed=5, leak_rate_scale=1.0, duration_s=1.0))
        assert np.sqrt(np.mean(lo.samples**2)) < np.sqrt(np.mean(hi.samples**2))
        # upper band edge of the 0.2 variant shrinks to 0.8 * 48 kHz
        assert band_energy_fraction(lo.samples, FS, 20_000, 48_000 * 0.8) >= 0.9


class TestDischarge:
    def test_corona_phase_cluster(self):
        spec = SourceSpec(ClassLabel.CORONA, rng_seed=1, mains_hz=60.0)
        sig = gen_discharge(spec)
        phases = detect_onset_phases(sig.samples, FS, 60.0)
        assert phases.size > 300
        dist = np.abs((phases - 270.0 + 180.0) % 360.0 - 180.0)
        assert np.mean(dist <= 30.0) >= 0.8

    def test_surface_both_half_cycles(self):
        spec = SourceSpec(ClassLabel.SURFACE, rng_seed=2, pulses_per_cycle=4)
        sig = gen_discharge(spec)
        phases = detect_onset_phases(sig.samples, FS, 60.0)
        pos = np.mean(phases < 180.0)
        assert pos >= 0.3 and (1.0 - pos) >= 0.3

    def test_floating_low_phase_jitter(self):
        spec = SourceSpec(ClassLabel.FLOATING, rng_seed=3, pulses_per_cycle=3, carrier_fixed=True,
                          phase_jitter_deg=3.0, pulse_gain_jitter=0.1)
        sig = gen_discharge(spec)
        phases = detect_onset_phases(sig.samples, FS, 60.0)
        assert phases.size > 500
        assert circular_std_deg(phases, 360.0 / spec.pulses_per_cycle) < 10.0

    def test_zero_amplitude(self):
        sig = gen_discharge(SourceSpec(ClassLabel.CORONA, amplitude=0.0, duration_s=1.0))
        assert sig.n_samples == FS
        assert np.all(sig.samples == 0.0)

    def test_carriers_in_band(self):
        sig = gen_discharge(SourceSpec(ClassLabel.SURFACE, rng_seed=4, pulses_per_cycle=4, duration_s=2.0))
        assert band_energy_fraction(sig.samples, FS, 20_000, 48_000) >= 0.8

    def test_non_discharge_rejected(self):
        with pytest.raises(ValueError):
            gen_discharge(SourceSpec(ClassLabel.GAS_LEAK))


class TestBackground:
    def test_std_matches_amplitude(self):
        sig = gen_background(SourceSpec(ClassLabel.BACKGROUND, rng_seed=3, amplitude=1.0))
        std = np.std(sig.samples)
        assert 0.97 <= std <= 1.03

    def test_zero_amplitude(self):
        sig = gen_background(SourceSpec(ClassLabel.BACKGROUND, amplitude=0.0, duration_s=0.5))
        assert np.all(sig.samples == 0.0)

    def test_near_zero_mean(self):
        sig = gen_background(SourceSpec(ClassLabel.BACKGROUND, rng_seed=9))
        n = sig.n_samples
        assert abs(sig.samples.mean()) < 3.0 * sig.samples.std() / np.sqrt(n)

    def test_seeds_uncorrelated(self):
        a = gen_background(SourceSpec(ClassLabel.BACKGROUND, rng_seed=1))
        b = gen_background(SourceSpec(ClassLabel.BACKGROUND, rng_seed=2))
        rho = np.corrcoef(a.samples, b.samples)[0, 1]
        assert abs(rho) < 0.01

    def test_tones_stay_below_band(self):
        with pytest.raises(ValueError, match="20 kHz"):
            gen_background(SourceSpec(ClassLabel.BACKGROUND, tone_freqs_hz=(25_000.0,), tone_level=0.2))

    def test_wrong_class_rejected(self):
        with pytest.raises(ValueError):
            gen_background(SourceSpec(ClassLabel.CORONA))


class TestInvariants:
    @pytest.mark.parametrize("label", list(ClassLabel))
    def test_determinism_all_classes(self, label):
        spec = SourceSpec(label, rng_seed=13, duration_s=0.5, pulses_per_cycle=2)
        assert np.array_equal(generate(spec).samples, generate(spec).samples)

    @pytest.mark.parametrize("label", list(ClassLabel))
    @pytest.mark.parametrize("k", [3.0, 0.25, 2.0])
    def test_amplitude_linearity_exact(self, label, k):
        base = SourceSpec(label, rng_seed=21, duration_s=0.5, amplitude=1.0, pulses_per_cycle=2)
        scaled = base.with_amplitude(k)
        a = generate(base).samples
        b = generate(scaled).samples
        assert np.array_equal(b, k * a)

    def test_class_label_ordering(self):
        assert [l.display_name for l in ClassLabel] == ["Corona", "Surface", "Floating", "GasLeak", "Background"]
        assert [int(l) for l in ClassLabel] == [0, 1, 2, 3, 4]

    def test_label_roundtrip_from_name(self):
        for l in ClassLabel:
            assert ClassLabel.from_name(l.display_name) == l
        assert ClassLabel.from_name("gas_leak") == ClassLabel.GAS_LEAK
        with pytest.raises(ValueError):
            ClassLabel.from_name("plasma")
