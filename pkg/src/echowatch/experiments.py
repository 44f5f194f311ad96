"""Experiment drivers: corpus synthesis, training runs, sweeps, ablation.

Clips are described by :class:`ClipSpec` and materialized on demand, so
every stage (waveform, scene, noise, features) is a deterministic
function of the master seed. Splits and folds operate on clip ids; all
windows of a clip stay on one side of any split.

Evaluation convention: every 0.04 s interval of a test clip counts as
one prediction (truth = the clip's label); tables report unweighted
macro F1 over the five classes at that granularity, plus clip-level
majority-vote accuracy.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass

import numpy as np

from .beamform import BeamWeights, SteeringDirection, delay_and_sum
from .config import ExperimentConfig
from .evalharness import (
    aggregate_interval,
    classify_clip,
    kfold_split,
    majority_label,
    metrics,
    time_inference,
    window_interval_assignment,
)
from .features import extract_windows
from .io import sha256_of_ids
from .nn import Network, TrainConfig, WindowDataset, train
from .scene import RoomSpec, add_noise_at_snr, make_array, propagate
from .synth import ClassLabel, MonoSignal, SourceSpec, generate

ALL_LABELS = tuple(int(l) for l in ClassLabel)
ON_AXIS = SteeringDirection.from_vector((0.0, 0.0, 1.0))


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from a mixed tuple of ints/floats/strings."""
    ints = []
    for p in parts:
        if isinstance(p, str):
            ints.append(int(hashlib.sha256(p.encode()).hexdigest()[:15], 16))
        elif isinstance(p, float):
            ints.append(int(round(p * 1000)) & 0x7FFFFFFF)
        else:
            ints.append(int(p) & 0x7FFFFFFFFFFF)
    ss = np.random.SeedSequence(ints)
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


@dataclass(frozen=True)
class ClipSpec:
    clip_id: str
    label: ClassLabel
    source: SourceSpec
    noise_seed_base: int

    def fingerprint(self) -> str:
        src = dataclasses.asdict(self.source)
        src["label"] = int(self.source.label)
        blob = f"{self.clip_id}|{int(self.label)}|{sorted(src.items())}|{self.noise_seed_base}"
        return hashlib.sha256(blob.encode()).hexdigest()


def _draw_source(label: ClassLabel, rng: np.random.Generator, cfg: ExperimentConfig, wave_seed: int) -> SourceSpec:
    ds = cfg.dataset
    base = dict(
        label=label,
        rng_seed=wave_seed,
        amplitude=float(rng.uniform(0.8, 1.2)),
        duration_s=ds.duration_s,
        sample_rate_hz=ds.sample_rate_hz,
    )
    if label == ClassLabel.GAS_LEAK:
        return SourceSpec(
            **base,
            band_lo_hz=float(rng.uniform(20_000, 28_000)),
            band_hi_hz=float(rng.uniform(34_000, 46_000)),
            leak_rate_scale=float(rng.choice([0.2, 0.5, 1.0])),
            am_rate_hz=float(rng.uniform(0.5, 2.0)),
            am_depth=float(rng.uniform(0.3, 0.7)),
            n_spectral_bumps=int(rng.integers(2, 5)),
        )
    if label == ClassLabel.BACKGROUND:
        n_tones = int(rng.integers(0, 4))
        return SourceSpec(
            **base,
            tone_freqs_hz=tuple(float(f) for f in rng.uniform(60, 15_000, size=n_tones)),
            tone_level=float(rng.uniform(0.1, 0.4)) if n_tones else 0.0,
        )
    if label == ClassLabel.CORONA:
        pulses, fixed, gain_jitter = 1, False, 0.3
    elif label == ClassLabel.SURFACE:
        pulses, fixed, gain_jitter = int(rng.integers(4, 7)), False, 0.3
    else:  # floating: sparse quasi-regular train ringing at one gap resonance
        pulses, fixed, gain_jitter = int(rng.integers(2, 4)), True, 0.1
    return SourceSpec(
        **base,
        mains_hz=60.0,
        pulses_per_cycle=pulses,
        carrier_lo_hz=float(rng.uniform(25_000, 30_000)),
        carrier_hi_hz=float(rng.uniform(38_000, 45_000)),
        carrier_fixed=fixed,
        pulse_gain_jitter=gain_jitter,
        phase_jitter_deg=3.0,
    )


def build_corpus(cfg: ExperimentConfig) -> list[ClipSpec]:
    """Deterministic labeled clip corpus: clips_per_class clips per class."""
    specs = []
    for label in ClassLabel:
        for i in range(cfg.dataset.clips_per_class):
            rng = np.random.default_rng(derive_seed(cfg.master_seed, "clip", int(label), i))
            wave_seed = derive_seed(cfg.master_seed, "wave", int(label), i)
            source = _draw_source(label, rng, cfg, wave_seed)
            specs.append(
                ClipSpec(
                    clip_id=f"{label.display_name}-{i:03d}",
                    label=label,
                    source=source,
                    noise_seed_base=derive_seed(cfg.master_seed, "noise", int(label), i),
                )
            )
    return specs


def truncate_signal(sig: MonoSignal, seconds: float | None) -> MonoSignal:
    if seconds is None or seconds >= sig.duration_s:
        return sig
    n = int(round(seconds * sig.sample_rate_hz))
    return MonoSignal(sig.samples[:n], sig.sample_rate_hz, sig.label, n / sig.sample_rate_hz)


def _scene_room(cfg: ExperimentConfig, size: tuple[float, float, float] | None, absorption: float | None = None) -> RoomSpec | None:
    if size is None:
        return None
    w, l, h = size
    return RoomSpec.centered(
        w, l, h,
        source_offset=(0.0, 0.0, cfg.dataset.source_distance_m),
        absorption=cfg.eval.room_absorption if absorption is None else absorption,
        max_image_order=cfg.eval.room_max_image_order,
    )


def beamformed_clip(
    spec: ClipSpec,
    cfg: ExperimentConfig,
    snr_db: float | None = "default",
    room: RoomSpec | None = None,
    seconds: float | None = None,
    noise_tag: str = "train",
) -> MonoSignal:
    """Source -> scene -> (noise at SNR) -> delay-and-sum, as one mono clip."""
    if snr_db == "default":
        snr_db = cfg.dataset.snr_db
    source = truncate_signal(generate(spec.source), seconds)
    geometry = make_array(cfg.dataset.array_preset, cfg.dataset.n_channels)
    if room is None:
        rec = propagate(source, (0.0, 0.0, cfg.dataset.source_distance_m), geometry)
    else:
        rec = propagate(source, None, geometry, room=room)
    if snr_db is not None:
        seed = derive_seed(spec.noise_seed_base, noise_tag, float(snr_db))
        rec = add_noise_at_snr(rec, snr_db, cfg.dataset.noise_kind, seed)
    return delay_and_sum(rec, ON_AXIS, BeamWeights.uniform(rec.n_channels))


def clip_windows(spec: ClipSpec, cfg: ExperimentConfig, **kwargs):
    return extract_windows(beamformed_clip(spec, cfg, **kwargs), cfg.feature_params())


def subsample_indices(n_windows: int, n_keep: int) -> np.ndarray:
    if n_keep >= n_windows:
        return np.arange(n_windows)
    return np.unique(np.round(np.linspace(0, n_windows - 1, n_keep)).astype(np.int64))


def assemble_dataset(
    specs: list[ClipSpec],
    cfg: ExperimentConfig,
    windows_per_clip: int,
    cache: dict | None = None,
) -> WindowDataset:
    """Subsampled windows of each clip at the training condition."""
    all_windows, labels, ids = [], [], []
    for spec in specs:
        if cache is not None and spec.clip_id in cache:
            w = cache[spec.clip_id]
        else:
            batch = clip_windows(spec, cfg)
            w = batch.windows[subsample_indices(batch.n_windows, windows_per_clip)].astype(np.float32)
            if cache is not None:
                cache[spec.clip_id] = w
        all_windows.append(w)
        labels.append(np.full(w.shape[0], int(spec.label), dtype=np.int64))
        ids.append(np.full(w.shape[0], spec.clip_id, dtype=object))
    return WindowDataset(
        np.concatenate(all_windows), np.concatenate(labels), np.concatenate(ids)
    )


def split_train_test(specs: list[ClipSpec], fraction: float, seed: int) -> tuple[list[ClipSpec], list[ClipSpec]]:
    """Stratified clip-level split; asserts the id sets are disjoint."""
    rng = np.random.default_rng(seed)
    train_specs, test_specs = [], []
    by_label: dict[ClassLabel, list[ClipSpec]] = {}
    for spec in specs:
        by_label.setdefault(spec.label, []).append(spec)
    for label in sorted(by_label, key=int):
        clips = sorted(by_label[label], key=lambda s: s.clip_id)
        order = rng.permutation(len(clips))
        n_train = int(round(fraction * len(clips)))
        train_specs.extend(clips[i] for i in order[:n_train])
        test_specs.extend(clips[i] for i in order[n_train:])
    train_ids = {s.clip_id for s in train_specs}
    test_ids = {s.clip_id for s in test_specs}
    if train_ids & test_ids:
        raise AssertionError("train/test clip sets overlap")
    return train_specs, test_specs


def corpus_hash(specs: list[ClipSpec]) -> str:
    return hashlib.sha256("\n".join(s.fingerprint() for s in sorted(specs, key=lambda s: s.clip_id)).encode()).hexdigest()


@dataclass
class EvalOutcome:
    """Interval-level metrics plus clip-level majority-vote accuracy."""

    report: object                 # interval-level MetricsReport
    clip_accuracy: float
    n_clips: int
    interval_truth: np.ndarray
    interval_preds: np.ndarray

    @property
    def macro_f1(self) -> float:
        return self.report.macro_f1

    @property
    def interval_accuracy(self) -> float:
        return self.report.accuracy


def evaluate_clips(
    net: Network,
    specs: list[ClipSpec],
    cfg: ExperimentConfig,
    snr_db: float | None = "default",
    room: RoomSpec | None = None,
    seconds: float | None = None,
    noise_tag: str = "eval",
) -> EvalOutcome:
    """Render each clip at the given condition and score interval predictions."""
    truths, preds = [], []
    clip_hits = 0
    for spec in specs:
        mono = beamformed_clip(spec, cfg, snr_db=snr_db, room=room, seconds=seconds, noise_tag=noise_tag)
        result = classify_clip(mono, net, cfg.feature_params())
        labels = result.interval_labels
        preds.append(labels)
        truths.append(np.full(labels.shape[0], int(spec.label), dtype=np.int64))
        clip_hits += int(result.label == spec.label)
    interval_preds = np.concatenate(preds)
    interval_truth = np.concatenate(truths)
    report = metrics(interval_preds, interval_truth, labels=ALL_LABELS)
    return EvalOutcome(report, clip_hits / len(specs), len(specs), interval_truth, interval_preds)


def train_model(cfg: ExperimentConfig, train_specs: list[ClipSpec], train_cfg: TrainConfig | None = None, windows_per_clip: int | None = None, cache: dict | None = None) -> tuple[Network, list[dict]]:
    dataset = assemble_dataset(
        train_specs, cfg, windows_per_clip or cfg.train.windows_per_clip, cache=cache
    )
    net = Network(cfg.model.to_network_config(cfg.window_shape()))
    history = train(net, dataset, train_cfg or cfg.train.to_train_config())
    return net, history


def metrics_row(prefix: dict, outcome: EvalOutcome) -> dict:
    row = dict(prefix)
    row.update(
        {
            "macro_f1": outcome.macro_f1,
            "macro_precision": outcome.report.macro_precision,
            "macro_recall": outcome.report.macro_recall,
            "interval_accuracy": outcome.interval_accuracy,
            "clip_accuracy": outcome.clip_accuracy,
            "n_intervals": int(outcome.interval_truth.shape[0]),
        }
    )
    for label in ClassLabel:
        row[f"f1_{label.display_name}"] = float(outcome.report.f1[ALL_LABELS.index(int(label))])
    return row


def experiment_snr_sweep(net: Network, test_specs: list[ClipSpec], cfg: ExperimentConfig) -> list[dict]:
    """Re-noise the clean test scenes at each SNR level and score them."""
    rows = []
    for level in cfg.eval.snr_levels_db:
        outcome = evaluate_clips(
            net, test_specs, cfg,
            snr_db=level, seconds=cfg.eval.sweep_eval_seconds, noise_tag="snr-sweep",
        )
        rows.append(metrics_row({"snr_db": float(level)}, outcome))
    return rows


def experiment_room_sweep(net: Network, test_specs: list[ClipSpec], cfg: ExperimentConfig) -> list[dict]:
    """Score reverberant re-renderings per room size, plus two control rows."""
    rows = []
    baseline = evaluate_clips(
        net, test_specs, cfg,
        room=None, seconds=cfg.eval.sweep_eval_seconds, noise_tag="room-sweep",
    )
    rows.append(metrics_row({"room": "anechoic-baseline", "absorption": ""}, baseline))
    control = evaluate_clips(
        net, test_specs, cfg,
        room=_scene_room(cfg, cfg.eval.room_sizes[0], absorption=1.0),
        seconds=cfg.eval.sweep_eval_seconds, noise_tag="room-sweep",
    )
    rows.append(metrics_row({"room": "absorption-1.0-control", "absorption": 1.0}, control))
    for size in cfg.eval.room_sizes:
        outcome = evaluate_clips(
            net, test_specs, cfg,
            room=_scene_room(cfg, size), seconds=cfg.eval.sweep_eval_seconds, noise_tag="room-sweep",
        )
        name = "x".join(str(int(d)) for d in size)
        rows.append(metrics_row({"room": name, "absorption": cfg.eval.room_absorption}, outcome))
    return rows


ABLATION_VARIANTS = ("full", "no_gamma", "no_inception", "no_both")


def ablation_config(cfg: ExperimentConfig, variant: str) -> ExperimentConfig:
    if variant not in ABLATION_VARIANTS:
        raise ValueError(f"unknown ablation variant {variant!r}")
    features = cfg.features
    model = cfg.model
    if variant in ("no_gamma", "no_both"):
        features = dataclasses.replace(features, gamma=1.0)
    if variant in ("no_inception", "no_both"):
        model = dataclasses.replace(model, arch="plain")
    return dataclasses.replace(cfg, features=features, model=model)


def experiment_ablation(cfg: ExperimentConfig) -> list[dict]:
    """Train all four variants on identical splits/seeds; evaluate at the
    stress SNR from ``cfg.eval.ablation_snr_db``."""
    specs = build_corpus(cfg)
    train_specs, test_specs = split_train_test(specs, cfg.train.train_fraction, cfg.train.split_seed)
    rows = []
    base_hash = corpus_hash(train_specs)
    for variant in ABLATION_VARIANTS:
        vcfg = ablation_config(cfg, variant)
        if corpus_hash(split_train_test(build_corpus(vcfg), vcfg.train.train_fraction, vcfg.train.split_seed)[0]) != base_hash:
            raise AssertionError("ablation variants must share one training corpus")
        net, _ = train_model(vcfg, train_specs)
        outcome = evaluate_clips(
            net, test_specs, vcfg,
            snr_db=cfg.eval.ablation_snr_db, seconds=cfg.eval.sweep_eval_seconds, noise_tag="ablate",
        )
        rows.append(
            metrics_row(
                {
                    "variant": variant,
                    "arch": vcfg.model.arch,
                    "gamma": vcfg.features.gamma,
                    "param_count": net.param_count(),
                },
                outcome,
            )
        )
    return rows


def experiment_kfold(cfg: ExperimentConfig, k: int | None = None) -> dict:
    """Clip-level stratified k-fold: train on k-1 folds, test on the held fold."""
    k = k or cfg.eval.kfold_k
    specs = build_corpus(cfg)
    by_id = {s.clip_id: s for s in specs}
    folds = kfold_split({s.clip_id: int(s.label) for s in specs}, k, seed=cfg.eval.kfold_seed)

    covered = [cid for fold in folds for cid in fold]
    if len(covered) != len(set(covered)) or set(covered) != set(by_id):
        raise AssertionError("folds are not a disjoint cover of the corpus")

    fold_cfg = TrainConfig(
        lr=cfg.train.lr, beta1=cfg.train.beta1, beta2=cfg.train.beta2, eps=cfg.train.eps,
        batch_size=cfg.train.batch_size, max_epochs=cfg.eval.kfold_max_epochs,
        patience=cfg.eval.kfold_patience, val_fraction=cfg.train.val_fraction,
        seed=cfg.train.seed,
    )
    cache: dict = {}
    rows = []
    for i, fold in enumerate(folds):
        held = set(fold)
        train_specs = [s for s in specs if s.clip_id not in held]
        test_specs = [by_id[cid] for cid in fold]
        if {s.clip_id for s in train_specs} & held:
            raise AssertionError("fold leaked into its training set")
        net, _ = train_model(
            cfg, train_specs, train_cfg=fold_cfg,
            windows_per_clip=cfg.eval.kfold_windows_per_clip, cache=cache,
        )
        outcome = evaluate_clips(
            net, test_specs, cfg, seconds=cfg.eval.sweep_eval_seconds, noise_tag="kfold",
        )
        rows.append(metrics_row({"fold": i, "n_test_clips": len(test_specs)}, outcome))
    f1s = np.array([r["macro_f1"] for r in rows])
    summary = {
        "mean_macro_f1": float(f1s.mean()),
        "std_macro_f1": float(f1s.std()),
        "min_macro_f1": float(f1s.min()),
        "max_macro_f1": float(f1s.max()),
        "spread": float(f1s.max() - f1s.min()),
        "k": k,
    }
    return {"folds": rows, "summary": summary}


def experiment_timing(net: Network, cfg: ExperimentConfig, spec: ClipSpec) -> dict:
    mono = beamformed_clip(spec, cfg)
    return time_inference(net, mono, cfg.feature_params())
