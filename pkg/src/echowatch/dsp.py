"""Fractional-sample delay via a 16-tap Hann-windowed sinc interpolator.

Used by both scene rendering (applying propagation delays) and
delay-and-sum beamforming (compensating them), so the two stages are
numerically inverse within interpolator tolerance. Integer delays reduce
to an exact shift: the windowed sinc collapses to a unit impulse when the
fractional part is zero.
"""

from __future__ import annotations

import numpy as np

SINC_TAPS = 16
_HALF = SINC_TAPS // 2  # kernel support: offsets -(HALF-1) .. HALF


def fractional_delay_kernel(frac: float) -> np.ndarray:
    """FIR taps approximating a delay of ``frac`` samples, 0 <= frac < 1.

    Tap i (i = 0..15) sits at integer offset ``i - 7``; the kernel is a
    Hann-windowed sinc centered at ``frac``.
    """
    if not (0.0 <= frac < 1.0):
        raise ValueError("frac must lie in [0, 1)")
    offsets = np.arange(-(_HALF - 1), _HALF + 1, dtype=np.float64)  # -7 .. 8
    t = offsets - frac
    window = 0.5 + 0.5 * np.cos(np.pi * t / _HALF)
    window[np.abs(t) >= _HALF] = 0.0
    return np.sinc(t) * window


def delay_signal(x: np.ndarray, delay_samples: float) -> np.ndarray:
    """Evaluate ``x(t - delay_samples)`` on the original sample grid.

    Positive delays shift the waveform later, negative earlier. Output has
    the input's length; samples shifted in from beyond the edges are zero.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    out = np.zeros(n)
    int_part = int(np.floor(delay_samples))
    frac = float(delay_samples - int_part)

    if frac == 0.0:
        shifted = x
    else:
        kernel = fractional_delay_kernel(frac)
        # y[n] = sum_i k[i] * x[n - (i - (_HALF-1))]; np.convolve(x, k)[m]
        # = sum_i k[i] x[m-i], so y[n] = conv[n + _HALF - 1]
        conv = np.convolve(x, kernel)
        shifted = conv[_HALF - 1 : _HALF - 1 + n]

    if int_part == 0:
        out[:] = shifted
    elif int_part > 0:
        if int_part < n:
            out[int_part:] = shifted[: n - int_part]
    else:
        if -int_part < n:
            out[: n + int_part] = shifted[-int_part:]
    return out
