"""Artifact I/O: WAV clips with JSON sidecars, binary features, CSV tables.

Waveforms are 32-bit-float RIFF WAVE (mono sources, M-channel scenes)
with a same-basename ``.json`` sidecar carrying the label and generation
parameters. Spectrograms and window batches use a small binary format:
magic, JSON header (dims, resolutions, band, gamma), then row-major
float32 payload. CSV writers format numbers with ``repr`` so identical
runs produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .features import Spectrogram, WindowBatch
from .scene import ArrayGeometry, MultichannelRecording
from .synth import ClassLabel, MonoSignal

FEATURES_MAGIC = b"EWFEAT1\n"


def write_wav_mono(path, signal: MonoSignal, sidecar: dict | None = None) -> None:
    path = Path(path)
    wavfile.write(path, signal.sample_rate_hz, signal.samples.astype(np.float32))
    meta = {
        "kind": "mono",
        "label": signal.label.display_name,
        "sample_rate_hz": signal.sample_rate_hz,
        "duration_s": signal.duration_s,
        "sha256": sha256_of_array(signal.samples),
    }
    if sidecar:
        meta.update(sidecar)
    write_sidecar(path, meta)


def read_wav_mono(path) -> tuple[MonoSignal, dict]:
    path = Path(path)
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono, got {data.ndim} channels")
    meta = read_sidecar(path)
    label = ClassLabel.from_name(meta["label"])
    return MonoSignal(data.astype(np.float64), int(rate), label, data.shape[0] / rate), meta


def write_wav_multichannel(path, rec: MultichannelRecording, sidecar: dict | None = None) -> None:
    path = Path(path)
    wavfile.write(path, rec.sample_rate_hz, rec.channels.T.astype(np.float32))
    meta = {
        "kind": "multichannel",
        "label": rec.label.display_name,
        "sample_rate_hz": rec.sample_rate_hz,
        "n_channels": rec.n_channels,
        "geometry_preset": rec.geometry.name,
        "speed_of_sound": rec.geometry.speed_of_sound_c,
        "sha256": sha256_of_array(rec.channels),
    }
    if sidecar:
        meta.update(sidecar)
    write_sidecar(path, meta)


def read_wav_multichannel(path, geometry: ArrayGeometry | None = None) -> tuple[MultichannelRecording, dict]:
    from .scene import make_array

    path = Path(path)
    rate, data = wavfile.read(path)
    if data.ndim == 1:
        data = data[:, None]
    meta = read_sidecar(path)
    label = ClassLabel.from_name(meta["label"])
    if geometry is None:
        geometry = make_array(meta["geometry_preset"], data.shape[1], meta.get("speed_of_sound", 343.0))
    return MultichannelRecording(data.T.astype(np.float64), int(rate), geometry, label), meta


def write_sidecar(artifact_path, meta: dict) -> None:
    sidecar = Path(artifact_path).with_suffix(".json")
    sidecar.write_text(canonical_json(meta) + "\n")


def read_sidecar(artifact_path) -> dict:
    sidecar = Path(artifact_path).with_suffix(".json")
    return json.loads(sidecar.read_text())


def write_window_batch(path, batch: WindowBatch, extra: dict | None = None) -> None:
    header = {
        "kind": "window_batch",
        "shape": list(batch.windows.shape),
        "stride_frames": batch.stride_frames,
        "win_frames": batch.win_frames,
        "frame_s": batch.frame_s,
    }
    if extra:
        header.update(extra)
    _write_feature_file(path, header, batch.windows)


def read_window_batch(path) -> tuple[WindowBatch, dict]:
    header, payload = _read_feature_file(path)
    if header["kind"] != "window_batch":
        raise ValueError(f"{path}: not a window-batch file")
    windows = payload.reshape(header["shape"])
    batch = WindowBatch(
        windows,
        stride_frames=header["stride_frames"],
        win_frames=header["win_frames"],
        frame_s=header["frame_s"],
    )
    return batch, header


def write_spectrogram(path, spec: Spectrogram, extra: dict | None = None) -> None:
    header = {
        "kind": "spectrogram",
        "shape": list(spec.mag.shape),
        "bin_hz": spec.bin_hz,
        "frame_s": spec.frame_s,
        "band": list(spec.band) if spec.band else None,
        "bin_offset": spec.bin_offset,
    }
    if extra:
        header.update(extra)
    _write_feature_file(path, header, spec.mag)


def read_spectrogram(path) -> tuple[Spectrogram, dict]:
    header, payload = _read_feature_file(path)
    if header["kind"] != "spectrogram":
        raise ValueError(f"{path}: not a spectrogram file")
    spec = Spectrogram(
        payload.reshape(header["shape"]),
        bin_hz=header["bin_hz"],
        frame_s=header["frame_s"],
        band=tuple(header["band"]) if header["band"] else None,
        bin_offset=header["bin_offset"],
    )
    return spec, header


def _write_feature_file(path, header: dict, payload: np.ndarray) -> None:
    blob = canonical_json(header).encode()
    with open(path, "wb") as fh:
        fh.write(FEATURES_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(payload, dtype=np.float32).tobytes())


def _read_feature_file(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(len(FEATURES_MAGIC))
        if magic != FEATURES_MAGIC:
            raise ValueError(f"{path}: not a feature file")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n).decode())
        payload = np.frombuffer(fh.read(), dtype=np.float32)
    return header, payload


def write_csv(path, rows: list[list]) -> None:
    """Write rows (first row is the header) with deterministic formatting."""
    lines = []
    for row in rows:
        lines.append(",".join(_csv_cell(c) for c in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.floating,)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def read_csv(path) -> list[dict]:
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:]]


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_of_array(arr: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()


def sha256_of_ids(ids) -> str:
    joined = "\n".join(str(i) for i in sorted(ids))
    return hashlib.sha256(joined.encode()).hexdigest()


def write_manifest(path, manifest: dict) -> None:
    Path(path).write_text(canonical_json(manifest) + "\n")
