"""echowatch: ultrasonic hazard detection pipeline.

Synthetic source generation, microphone-array scene simulation with
reverberation and SNR control, delay-and-sum beamforming, spectrogram
feature extraction, a from-scratch Inception-style CNN, and an
experiment harness (k-fold, SNR / room-size sweeps, ablations).
"""

from .synth import ClassLabel, MonoSignal, SourceSpec, gen_background, gen_discharge, gen_gas_leak
from .scene import (
    ArrayGeometry,
    MultichannelRecording,
    RoomSpec,
    add_noise_at_snr,
    make_array,
    measure_snr,
    propagate,
)
from .beamform import BeamWeights, CameraModel, SteeringDirection, delay_and_sum, pixel_to_steering, steering_delays
from .features import (
    FeatureParams,
    Spectrogram,
    StftParams,
    WindowBatch,
    bandpass_bins,
    extract_windows,
    gamma_correct,
    normalize01,
    slide,
    stft,
)

__version__ = "0.1.0"
