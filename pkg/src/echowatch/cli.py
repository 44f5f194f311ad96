"""Command-line entry point wiring all stages into reproducible runs.

Subcommands::

    synth       write the labeled clip corpus as WAV + JSON sidecars
    render      propagate clips through the configured array (plus noise)
    beamform    delay-and-sum scenes toward detections (or on-axis)
    features    spectrogram window batches for each beamformed clip
    train       fit the classifier on the train split of the feature files
    eval        score the trained model on the test split
    kfold       clip-level k-fold cross-validation (self-contained)
    sweep-snr   F1 vs injected SNR level (self-contained)
    sweep-room  F1 vs room size under reverberation (self-contained)
    ablate      full / no-gamma / no-inception / no-both comparison
    time        single-clip inference timing and parameter count

Every command takes a JSON config, optional ``--set key=value``
overrides, and an ``--out`` directory; artifact-producing commands write
a manifest with the config hash and input hashes. Exit codes: 0 success,
2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import io as eio
from .beamform import BeamWeights, CameraModel, delay_and_sum, pixel_to_steering
from .config import ConfigError, ExperimentConfig, config_hash, load_config, to_dict
from .evalharness import aggregate_interval, majority_label, metrics, window_interval_assignment
from .features import extract_windows
from .nn import Network, WindowDataset, train
from .nn.optim import NumericalError
from .nn.train import history_csv_rows, predict_batched
from .scene import add_noise_at_snr, make_array, propagate
from .synth import ClassLabel, generate


class DataError(RuntimeError):
    """Missing or malformed input artifacts."""


EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="echowatch", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    commands = [
        "synth", "render", "beamform", "features", "train", "eval",
        "kfold", "sweep-snr", "sweep-room", "ablate", "time",
    ]
    for name in commands:
        p = sub.add_parser(name)
        p.add_argument("config", help="path to the JSON experiment config")
        p.add_argument("--out", required=True, help="output root directory")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config entry (dotted path, JSON value)")
        if name == "beamform":
            p.add_argument("--detections", default=None,
                           help="CSV of px,py,class_name detections; default steers on-axis")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        handler = _HANDLERS[args.command]
        handler(cfg, out, args)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def _manifest(cfg: ExperimentConfig, extra: dict) -> dict:
    base = {"config_hash": config_hash(cfg), "config": to_dict(cfg)}
    base.update(extra)
    return base


def _clip_files(directory: Path, what: str) -> list[Path]:
    if not directory.is_dir():
        raise DataError(f"{what} directory {directory} does not exist; run the previous stage first")
    files = sorted(directory.glob("*.wav"))
    if not files:
        raise DataError(f"no WAV clips found under {directory}")
    return files


def cmd_synth(cfg: ExperimentConfig, out: Path, args) -> None:
    clips_dir = out / "clips"
    clips_dir.mkdir(parents=True, exist_ok=True)
    specs = ex.build_corpus(cfg)
    for spec in specs:
        signal = generate(spec.source)
        eio.write_wav_mono(
            clips_dir / f"{spec.clip_id}.wav", signal,
            sidecar={"clip_id": spec.clip_id, "source": _source_dict(spec), "noise_seed_base": spec.noise_seed_base},
        )
    eio.write_manifest(out / "synth_manifest.json", _manifest(cfg, {
        "command": "synth",
        "n_clips": len(specs),
        "corpus_hash": ex.corpus_hash(specs),
    }))


def _source_dict(spec: ex.ClipSpec) -> dict:
    import dataclasses

    d = dataclasses.asdict(spec.source)
    d["label"] = spec.label.display_name
    d["tone_freqs_hz"] = list(d["tone_freqs_hz"])
    return d


def cmd_render(cfg: ExperimentConfig, out: Path, args) -> None:
    scenes_dir = out / "scenes"
    scenes_dir.mkdir(parents=True, exist_ok=True)
    geometry = make_array(cfg.dataset.array_preset, cfg.dataset.n_channels)
    rendered = []
    for wav in _clip_files(out / "clips", "clips"):
        signal, meta = eio.read_wav_mono(wav)
        rec = propagate(signal, (0.0, 0.0, cfg.dataset.source_distance_m), geometry)
        if cfg.dataset.snr_db is not None:
            seed = ex.derive_seed(meta["noise_seed_base"], "train", float(cfg.dataset.snr_db))
            rec = add_noise_at_snr(rec, cfg.dataset.snr_db, cfg.dataset.noise_kind, seed)
        eio.write_wav_multichannel(
            scenes_dir / wav.name, rec,
            sidecar={
                "clip_id": meta["clip_id"],
                "source_pos": [0.0, 0.0, cfg.dataset.source_distance_m],
                "snr_db": cfg.dataset.snr_db,
                "noise_kind": cfg.dataset.noise_kind,
                "noise_seed_base": meta["noise_seed_base"],
            },
        )
        rendered.append(meta["clip_id"])
    eio.write_manifest(out / "render_manifest.json", _manifest(cfg, {
        "command": "render", "n_scenes": len(rendered), "clip_ids_hash": eio.sha256_of_ids(rendered),
    }))


def _load_detections(path: str | None) -> list[tuple[float, float, str]]:
    if path is None:
        return []
    rows = eio.read_csv(path)
    needed = {"px", "py", "class_name"}
    if rows and not needed.issubset(rows[0]):
        raise DataError(f"detections file must have columns px,py,class_name")
    return [(float(r["px"]), float(r["py"]), r["class_name"]) for r in rows]


def cmd_beamform(cfg: ExperimentConfig, out: Path, args) -> None:
    beams_dir = out / "beams"
    beams_dir.mkdir(parents=True, exist_ok=True)
    detections = _load_detections(getattr(args, "detections", None))
    cam = CameraModel()
    if detections:
        # one beam per detected component, named <clip>__d<k>
        steerings = [
            (f"__d{k}", pixel_to_steering(px, py, cam), name)
            for k, (px, py, name) in enumerate(detections)
        ]
    else:
        steerings = [("", ex.ON_AXIS, "on-axis")]
    n_beams = 0
    for wav in _clip_files(out / "scenes", "scenes"):
        rec, meta = eio.read_wav_multichannel(wav)
        for suffix, direction, det_name in steerings:
            mono = delay_and_sum(rec, direction, BeamWeights.uniform(rec.n_channels))
            eio.write_wav_mono(
                beams_dir / f"{wav.stem}{suffix}.wav", mono,
                sidecar={
                    "clip_id": meta["clip_id"],
                    "steering": list(direction.u),
                    "detection": det_name,
                },
            )
            n_beams += 1
    eio.write_manifest(out / "beamform_manifest.json", _manifest(cfg, {
        "command": "beamform",
        "n_beams": n_beams,
        "n_detections": len(detections),
    }))


def cmd_features(cfg: ExperimentConfig, out: Path, args) -> None:
    feats_dir = out / "features"
    feats_dir.mkdir(parents=True, exist_ok=True)
    params = cfg.feature_params()
    done = []
    for wav in _clip_files(out / "beams", "beams"):
        signal, meta = eio.read_wav_mono(wav)
        batch = extract_windows(signal, params)
        eio.write_window_batch(
            feats_dir / (wav.stem + ".ewfeat"), batch,
            extra={"clip_id": meta["clip_id"], "label": signal.label.display_name, "gamma": params.gamma,
                   "band": [params.band_lo_hz, params.band_hi_hz]},
        )
        done.append(meta["clip_id"])
    eio.write_manifest(out / "features_manifest.json", _manifest(cfg, {
        "command": "features", "n_feature_files": len(done), "clip_ids_hash": eio.sha256_of_ids(done),
    }))


def _feature_files(out: Path) -> list[Path]:
    feats_dir = out / "features"
    if not feats_dir.is_dir():
        raise DataError(f"features directory {feats_dir} does not exist; run `features` first")
    files = sorted(feats_dir.glob("*.ewfeat"))
    if not files:
        raise DataError(f"no feature files under {feats_dir}")
    return files


def _split_ids(files: list[Path], cfg: ExperimentConfig) -> tuple[dict, set, set]:
    headers = {}
    for f in files:
        _, header = eio.read_window_batch(f)
        headers[header["clip_id"]] = (f, ClassLabel.from_name(header["label"]))
    rng = np.random.default_rng(cfg.train.split_seed)
    by_label: dict[ClassLabel, list[str]] = {}
    for cid, (_, label) in headers.items():
        by_label.setdefault(label, []).append(cid)
    train_ids, test_ids = set(), set()
    for label in sorted(by_label, key=int):
        ids = sorted(by_label[label])
        order = rng.permutation(len(ids))
        n_train = int(round(cfg.train.train_fraction * len(ids)))
        train_ids.update(ids[i] for i in order[:n_train])
        test_ids.update(ids[i] for i in order[n_train:])
    if train_ids & test_ids:
        raise AssertionError("train/test split overlaps")
    return headers, train_ids, test_ids


def cmd_train(cfg: ExperimentConfig, out: Path, args) -> None:
    files = _feature_files(out)
    headers, train_ids, test_ids = _split_ids(files, cfg)
    windows, labels, ids = [], [], []
    for cid in sorted(train_ids):
        path, label = headers[cid]
        batch, _ = eio.read_window_batch(path)
        keep = ex.subsample_indices(batch.n_windows, cfg.train.windows_per_clip)
        w = batch.windows[keep]
        windows.append(w)
        labels.append(np.full(w.shape[0], int(label), dtype=np.int64))
        ids.append(np.full(w.shape[0], cid, dtype=object))
    if not windows:
        raise DataError("training split is empty")
    dataset = WindowDataset(np.concatenate(windows), np.concatenate(labels), np.concatenate(ids))
    net = Network(cfg.model.to_network_config(cfg.window_shape()))
    history = train(net, dataset, cfg.train.to_train_config())
    net.save(out / "model.ewnet")
    eio.write_csv(out / "history.csv", history_csv_rows(history))
    eio.write_manifest(out / "train_manifest.json", _manifest(cfg, {
        "command": "train",
        "train_ids_hash": eio.sha256_of_ids(train_ids),
        "test_ids_hash": eio.sha256_of_ids(test_ids),
        "n_train_clips": len(train_ids),
        "n_windows": int(dataset.n_windows),
        "param_count": net.param_count(),
        "epochs_run": len(history),
    }))


def _load_model(out: Path) -> Network:
    model_path = out / "model.ewnet"
    if not model_path.exists():
        raise DataError(f"{model_path} not found; run `train` first")
    return Network.load(model_path)


def cmd_eval(cfg: ExperimentConfig, out: Path, args) -> None:
    files = _feature_files(out)
    headers, train_ids, test_ids = _split_ids(files, cfg)
    net = _load_model(out)
    truths, preds = [], []
    interval_rows = [["clip_id", "interval_index", "truth", "prediction", "max_prob", "n_windows"]]
    clip_hits = 0
    for cid in sorted(test_ids):
        path, label = headers[cid]
        batch, _ = eio.read_window_batch(path)
        probs = predict_batched(net, batch.windows.astype(np.float32))
        assignment = window_interval_assignment(batch)
        intervals = aggregate_interval(probs, assignment)
        clip_hits += int(majority_label(intervals) == label)
        for iv in intervals:
            truths.append(int(label))
            preds.append(int(iv.label))
            interval_rows.append([
                cid, iv.interval_index, label.display_name, iv.label.display_name,
                float(iv.probs.max()), iv.n_windows,
            ])
    if not truths:
        raise DataError("test split is empty")
    report = metrics(preds, truths, labels=ex.ALL_LABELS)
    row = {
        "macro_f1": report.macro_f1,
        "macro_precision": report.macro_precision,
        "macro_recall": report.macro_recall,
        "interval_accuracy": report.accuracy,
        "clip_accuracy": clip_hits / len(test_ids),
        "n_test_clips": len(test_ids),
        "n_intervals": len(truths),
    }
    for label in ClassLabel:
        row[f"f1_{label.display_name}"] = float(report.f1[ex.ALL_LABELS.index(int(label))])
    eio.write_csv(out / "eval.csv", _rows_from_dicts([row]))
    eio.write_csv(out / "intervals.csv", interval_rows)
    eio.write_csv(out / "confusion.csv", _confusion_rows(report))
    eio.write_manifest(out / "eval_manifest.json", _manifest(cfg, {
        "command": "eval",
        "train_ids_hash": eio.sha256_of_ids(train_ids),
        "test_ids_hash": eio.sha256_of_ids(test_ids),
    }))


def _confusion_rows(report) -> list[list]:
    names = [ClassLabel(l).display_name for l in report.labels]
    rows = [["truth\\pred"] + names]
    for i, name in enumerate(names):
        rows.append([name] + [int(c) for c in report.confusion[i]])
    return rows


def _rows_from_dicts(dicts: list[dict]) -> list[list]:
    header = list(dicts[0].keys())
    rows = [header]
    for d in dicts:
        rows.append([d[k] for k in header])
    return rows


def _split_corpus(cfg: ExperimentConfig):
    specs = ex.build_corpus(cfg)
    return specs, *ex.split_train_test(specs, cfg.train.train_fraction, cfg.train.split_seed)


def cmd_kfold(cfg: ExperimentConfig, out: Path, args) -> None:
    result = ex.experiment_kfold(cfg)
    eio.write_csv(out / "kfold.csv", _rows_from_dicts(result["folds"]))
    eio.write_csv(out / "kfold_summary.csv", _rows_from_dicts([result["summary"]]))
    eio.write_manifest(out / "kfold_manifest.json", _manifest(cfg, {
        "command": "kfold", "corpus_hash": ex.corpus_hash(ex.build_corpus(cfg)),
    }))


def _trained_on_split(cfg: ExperimentConfig):
    specs, train_specs, test_specs = _split_corpus(cfg)
    net, history = ex.train_model(cfg, train_specs)
    return net, train_specs, test_specs


def cmd_sweep_snr(cfg: ExperimentConfig, out: Path, args) -> None:
    net, train_specs, test_specs = _trained_on_split(cfg)
    rows = ex.experiment_snr_sweep(net, test_specs, cfg)
    eio.write_csv(out / "sweep_snr.csv", _rows_from_dicts(rows))
    eio.write_manifest(out / "sweep_snr_manifest.json", _manifest(cfg, {
        "command": "sweep-snr",
        "train_ids_hash": eio.sha256_of_ids([s.clip_id for s in train_specs]),
        "test_ids_hash": eio.sha256_of_ids([s.clip_id for s in test_specs]),
        "levels_db": list(cfg.eval.snr_levels_db),
    }))


def cmd_sweep_room(cfg: ExperimentConfig, out: Path, args) -> None:
    net, train_specs, test_specs = _trained_on_split(cfg)
    rows = ex.experiment_room_sweep(net, test_specs, cfg)
    eio.write_csv(out / "sweep_room.csv", _rows_from_dicts(rows))
    eio.write_manifest(out / "sweep_room_manifest.json", _manifest(cfg, {
        "command": "sweep-room",
        "train_ids_hash": eio.sha256_of_ids([s.clip_id for s in train_specs]),
        "test_ids_hash": eio.sha256_of_ids([s.clip_id for s in test_specs]),
        "rooms": [list(r) for r in cfg.eval.room_sizes],
    }))


def cmd_ablate(cfg: ExperimentConfig, out: Path, args) -> None:
    rows = ex.experiment_ablation(cfg)
    eio.write_csv(out / "ablate.csv", _rows_from_dicts(rows))
    eio.write_manifest(out / "ablate_manifest.json", _manifest(cfg, {
        "command": "ablate", "stress_snr_db": cfg.eval.ablation_snr_db,
    }))


def cmd_time(cfg: ExperimentConfig, out: Path, args) -> None:
    specs, train_specs, test_specs = _split_corpus(cfg)
    net, _ = ex.train_model(cfg, train_specs)
    result = ex.experiment_timing(net, cfg, test_specs[0])
    row = {
        "median_s": result["median_s"],
        "param_count": result["param_count"],
        "n_windows": result["n_windows"],
        "n_intervals": result["n_intervals"],
        "clip_id": test_specs[0].clip_id,
    }
    eio.write_csv(out / "time.csv", _rows_from_dicts([row]))
    eio.write_manifest(out / "time_manifest.json", _manifest(cfg, {"command": "time"}))


_HANDLERS = {
    "synth": cmd_synth,
    "render": cmd_render,
    "beamform": cmd_beamform,
    "features": cmd_features,
    "train": cmd_train,
    "eval": cmd_eval,
    "kfold": cmd_kfold,
    "sweep-snr": cmd_sweep_snr,
    "sweep-room": cmd_sweep_room,
    "ablate": cmd_ablate,
    "time": cmd_time,
}


if __name__ == "__main__":
    sys.exit(main())
