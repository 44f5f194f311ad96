"""Experiment configuration: one JSON-serializable tree drives every run.

The tree round-trips through JSON exactly (parse -> serialize -> parse is
a fixed point), supports dotted ``key=value`` overrides, and hashes
canonically so run manifests can pin the exact configuration.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .features import FeatureParams, StftParams
from .nn.network import InceptionConfig, PlainCnnConfig
from .nn.train import TrainConfig


class ConfigError(ValueError):
    """Invalid configuration file, key, or value."""


@dataclass(frozen=True)
class DatasetSection:
    clips_per_class: int = 40
    duration_s: float = 10.0
    sample_rate_hz: int = 96_000
    array_preset: str = "single"
    n_channels: int = 1
    source_distance_m: float = 1.0
    snr_db: float | None = 5.0          # noise level injected pre-beamforming; None = clean
    noise_kind: str = "gaussian"


@dataclass(frozen=True)
class FeatureSection:
    n_fft: int = 512
    hop: int = 128
    band_lo_hz: float = 20_000.0
    band_hi_hz: float = 48_000.0
    gamma: float = 1.5
    win_frames: int = 24
    hop_frames: int = 8

    def to_params(self, sample_rate_hz: int) -> FeatureParams:
        return FeatureParams(
            stft=StftParams(self.n_fft, self.hop, sample_rate_hz),
            band_lo_hz=self.band_lo_hz,
            band_hi_hz=self.band_hi_hz,
            gamma=self.gamma,
            win_frames=self.win_frames,
            hop_frames=self.hop_frames,
        )


@dataclass(frozen=True)
class ModelSection:
    arch: str = "inception"
    seed: int = 7
    stage_order: str = "relu_pool_bn"
    mlp_hidden: int = 0
    kernel_sizes: tuple[int, ...] = (1, 3, 5)
    path_channels: tuple[tuple[int, ...], ...] = ((4, 4, 4), (8, 6, 4))
    proj_channels: tuple[tuple[int, ...], ...] = ((4, 4, 8), (4, 4, 8))
    plain_channels: tuple[int, ...] = (4, 6, 6)
    plain_kernel: int = 3
    plain_mlp_hidden: int = 0

    def to_network_config(self, input_shape: tuple[int, int]):
        if self.arch == "inception":
            return InceptionConfig(
                input_shape=input_shape,
                kernel_sizes=self.kernel_sizes,
                path_channels=self.path_channels,
                proj_channels=self.proj_channels,
                mlp_hidden=self.mlp_hidden,
                stage_order=self.stage_order,
                seed=self.seed,
            )
        if self.arch == "plain":
            return PlainCnnConfig(
                input_shape=input_shape,
                kernel_size=self.plain_kernel,
                channels=self.plain_channels,
                mlp_hidden=self.plain_mlp_hidden,
                stage_order=self.stage_order,
                seed=self.seed,
            )
        raise ConfigError(f"unknown model arch {self.arch!r}")


@dataclass(frozen=True)
class TrainSection:
    windows_per_clip: int = 32
    train_fraction: float = 0.7
    split_seed: int = 77
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    max_epochs: int = 40
    patience: int = 8
    val_fraction: float = 0.15
    seed: int = 99

    def to_train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            val_fraction=self.val_fraction,
            seed=self.seed,
        )


@dataclass(frozen=True)
class EvalSection:
    eval_seconds: float | None = None        # None = full clips
    sweep_eval_seconds: float = 2.5
    snr_levels_db: tuple[float, ...] = (5.0, 4.0, 3.0, 2.0, 1.0, 0.0, -1.0, -2.0, -3.0)
    room_sizes: tuple[tuple[float, float, float], ...] = (
        (20.0, 10.0, 20.0),
        (30.0, 15.0, 30.0),
        (40.0, 20.0, 40.0),
        (50.0, 25.0, 50.0),
    )
    room_absorption: float = 0.3
    room_max_image_order: int = 2
    ablation_snr_db: float = 0.0
    kfold_k: int = 10
    kfold_windows_per_clip: int = 8
    kfold_max_epochs: int = 12
    kfold_patience: int = 4
    kfold_seed: int = 55


@dataclass(frozen=True)
class ExperimentConfig:
    master_seed: int = 1234
    dataset: DatasetSection = field(default_factory=DatasetSection)
    features: FeatureSection = field(default_factory=FeatureSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def feature_params(self) -> FeatureParams:
        return self.features.to_params(self.dataset.sample_rate_hz)

    def window_shape(self) -> tuple[int, int]:
        return self.feature_params().window_shape


_SECTIONS = {
    "dataset": DatasetSection,
    "features": FeatureSection,
    "model": ModelSection,
    "train": TrainSection,
    "eval": EvalSection,
}


def to_dict(cfg) -> dict:
    def convert(v):
        if dataclasses.is_dataclass(v):
            return {f.name: convert(getattr(v, f.name)) for f in dataclasses.fields(v)}
        if isinstance(v, tuple):
            return [convert(i) for i in v]
        return v

    return convert(cfg)


def _from_dict(cls, d: dict):
    if not isinstance(d, dict):
        raise ConfigError(f"expected an object for {cls.__name__}, got {type(d).__name__}")
    kwargs = {}
    known = {f.name for f in dataclasses.fields(cls)}
    for key, value in d.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r} in {cls.__name__}")
        if cls is ExperimentConfig and key in _SECTIONS:
            kwargs[key] = _from_dict(_SECTIONS[key], value)
        elif isinstance(value, list):
            kwargs[key] = _tuplify(value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _tuplify(v):
    if isinstance(v, list):
        return tuple(_tuplify(i) for i in v)
    return v


def from_dict(d: dict) -> ExperimentConfig:
    return _from_dict(ExperimentConfig, d)


def load_config(path, overrides: list[str] | None = None) -> ExperimentConfig:
    """Read a JSON config file and apply dotted ``key=value`` overrides."""
    try:
        d = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    for item in overrides or []:
        d = apply_override(d, item)
    return from_dict(d)


def apply_override(d: dict, item: str) -> dict:
    """Apply one ``section.key=json_value`` override to a config dict."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    path, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    keys = path.strip().split(".")
    node = d
    for key in keys[:-1]:
        if key not in node or not isinstance(node[key], dict):
            node[key] = {}
        node = node[key]
    node[keys[-1]] = value
    return d


def save_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(json.dumps(to_dict(cfg), indent=2, sort_keys=True) + "\n")


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()
