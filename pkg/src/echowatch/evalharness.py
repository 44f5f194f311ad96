"""Post-processing and evaluation: interval aggregation, metrics, folds.

Window-level class probabilities are grouped into 0.04 s intervals by
window-center time and averaged into one representative probability
vector per interval; downstream metrics treat each interval as one
prediction. Metrics are one-vs-rest per class with unweighted macro
averages; k-fold splitting is stratified at the clip level.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .beamform import SteeringDirection, delay_and_sum
from .features import FeatureParams, WindowBatch, extract_windows
from .scene import MultichannelRecording
from .synth import ClassLabel, MonoSignal, N_CLASSES

INTERVAL_S = 0.04


@dataclass(frozen=True)
class IntervalPrediction:
    """Aggregated prediction for one 0.04 s interval."""

    interval_index: int
    probs: np.ndarray          # (n_classes,), mean of member windows
    label: ClassLabel
    n_windows: int

    def __post_init__(self):
        if self.interval_index < 0:
            raise ValueError("interval_index must be >= 0")
        p = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", p)
        if abs(p.sum() - 1.0) > 1e-6 or p.min() < 0:
            raise ValueError("aggregated probabilities are not a distribution")


def window_interval_assignment(batch: WindowBatch, interval_s: float = INTERVAL_S) -> np.ndarray:
    """Interval index of each window, by window-center time."""
    centers = np.array([batch.center_time_s(i) for i in range(batch.n_windows)])
    return np.floor(centers / interval_s).astype(np.int64)


def aggregate_interval(window_probs: np.ndarray, assignment: np.ndarray) -> list[IntervalPrediction]:
    """Average window probabilities within each assigned interval.

    ``assignment[i]`` is the interval index of window i. Intervals with no
    windows produce no entry. Accumulation runs in window order with
    64-bit sums, so a sequential group-by-mean reproduces it exactly.
    """
    probs = np.asarray(window_probs, dtype=np.float64)
    assignment = np.asarray(assignment, dtype=np.int64)
    if probs.ndim != 2 or probs.shape[0] != assignment.shape[0]:
        raise ValueError("one assignment per window row is required")
    if assignment.size == 0:
        return []
    if assignment.min() < 0:
        raise ValueError("interval indices must be >= 0")
    n_intervals = int(assignment.max()) + 1
    counts = np.bincount(assignment, minlength=n_intervals)
    sums = np.empty((n_intervals, probs.shape[1]), dtype=np.float64)
    for j in range(probs.shape[1]):
        sums[:, j] = np.bincount(assignment, weights=probs[:, j], minlength=n_intervals)
    out = []
    for idx in np.nonzero(counts)[0]:
        mean = sums[idx] / counts[idx]
        out.append(
            IntervalPrediction(int(idx), mean, ClassLabel(int(mean.argmax())), int(counts[idx]))
        )
    return out


@dataclass(frozen=True)
class ClipResult:
    """Interval predictions plus the clip-level majority label."""

    intervals: list[IntervalPrediction]
    label: ClassLabel

    @property
    def interval_labels(self) -> np.ndarray:
        return np.array([iv.label for iv in self.intervals], dtype=np.int64)


def majority_label(intervals: list[IntervalPrediction]) -> ClassLabel:
    """Most frequent interval label; ties go to the highest summed probability."""
    if not intervals:
        raise ValueError("no intervals to vote over")
    votes = np.zeros(N_CLASSES, dtype=np.int64)
    summed = np.zeros(N_CLASSES, dtype=np.float64)
    for iv in intervals:
        votes[iv.label] += 1
        summed += iv.probs
    top = votes.max()
    tied = np.nonzero(votes == top)[0]
    if tied.size == 1:
        return ClassLabel(int(tied[0]))
    best = tied[np.argmax(summed[tied])]
    return ClassLabel(int(best))


def classify_clip(
    clip: MonoSignal | MultichannelRecording,
    net,
    pipeline: FeatureParams = FeatureParams(),
    steering: SteeringDirection | None = None,
    batch_size: int = 256,
) -> ClipResult:
    """Full pipeline: (beamform if multichannel) -> features -> model -> aggregate."""
    if isinstance(clip, MultichannelRecording):
        direction = steering if steering is not None else SteeringDirection.from_vector((0.0, 0.0, 1.0))
        mono = delay_and_sum(clip, direction)
    else:
        mono = clip
    batch = extract_windows(mono, pipeline)
    probs = _predict(net, batch.windows, batch_size)
    assignment = window_interval_assignment(batch)
    intervals = aggregate_interval(probs, assignment)
    return ClipResult(intervals, majority_label(intervals))


def _predict(net, windows: np.ndarray, batch_size: int) -> np.ndarray:
    parts = [
        net.forward_batch(windows[i : i + batch_size].astype(np.float32))
        for i in range(0, windows.shape[0], batch_size)
    ]
    return np.concatenate(parts, axis=0)


@dataclass(frozen=True)
class MetricsReport:
    """Per-class and macro precision/recall/F1, accuracy, confusion counts."""

    labels: tuple[int, ...]
    confusion: np.ndarray            # rows = truth, cols = prediction
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    undefined: tuple[str, ...]       # "precision:<label>" style flags for 0/0 cases
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float

    def class_row(self, label: int) -> dict:
        i = self.labels.index(label)
        return {
            "precision": float(self.precision[i]),
            "recall": float(self.recall[i]),
            "f1": float(self.f1[i]),
            "support": int(self.support[i]),
        }


def metrics(preds, truth, labels=None) -> MetricsReport:
    """One-vs-rest precision/recall/F1 per class with unweighted macro means.

    Ratios with zero denominators are reported as 0 and flagged in
    ``undefined``. ``labels`` fixes the class set (defaults to the classes
    present in either vector).
    """
    preds = np.asarray(preds, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if preds.shape != truth.shape or preds.ndim != 1:
        raise ValueError("preds and truth must be equal-length 1-D label vectors")
    if preds.size == 0:
        raise ValueError("cannot score empty label vectors")
    if labels is None:
        labels = np.union1d(preds, truth)
    labels = tuple(int(l) for l in labels)
    index = {l: i for i, l in enumerate(labels)}
    k = len(labels)
    confusion = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(truth, preds):
        confusion[index[t], index[p]] += 1

    tp = np.diag(confusion).astype(np.float64)
    pred_totals = confusion.sum(axis=0).astype(np.float64)
    true_totals = confusion.sum(axis=1).astype(np.float64)

    undefined = []
    precision = np.zeros(k)
    recall = np.zeros(k)
    f1 = np.zeros(k)
    for i, label in enumerate(labels):
        if pred_totals[i] > 0:
            precision[i] = tp[i] / pred_totals[i]
        else:
            undefined.append(f"precision:{label}")
        if true_totals[i] > 0:
            recall[i] = tp[i] / true_totals[i]
        else:
            undefined.append(f"recall:{label}")
        if precision[i] + recall[i] > 0:
            f1[i] = 2 * precision[i] * recall[i] / (precision[i] + recall[i])
        else:
            undefined.append(f"f1:{label}")

    return MetricsReport(
        labels=labels,
        confusion=confusion,
        precision=precision,
        recall=recall,
        f1=f1,
        support=true_totals.astype(np.int64),
        undefined=tuple(undefined),
        accuracy=float(tp.sum() / confusion.sum()),
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
    )


def kfold_split(clip_labels: dict, k: int, seed: int = 0) -> list[list]:
    """Stratified clip-level fold assignment.

    ``clip_labels`` maps clip id -> class label. Each class must have at
    least k clips; per class, shuffled clips are dealt round-robin, so the
    folds are a disjoint cover of the clips.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    by_class: dict = {}
    for clip_id, label in clip_labels.items():
        by_class.setdefault(label, []).append(clip_id)
    folds: list[list] = [[] for _ in range(k)]
    for label in sorted(by_class, key=int):
        clips = sorted(by_class[label])
        if len(clips) < k:
            raise ValueError(
                f"class {label} has {len(clips)} clips; k={k} folds need at least {k}"
            )
        order = rng.permutation(len(clips))
        for i, j in enumerate(order):
            folds[i % k].append(clips[j])
    return [sorted(f) for f in folds]


def time_inference(net, clip: MonoSignal, pipeline: FeatureParams = FeatureParams(), n_runs: int = 5) -> dict:
    """Median wall-clock seconds for features+forward+aggregate on one clip."""
    times = []
    result = None
    for _ in range(n_runs):
        t0 = time.perf_counter()
        result = classify_clip(clip, net, pipeline)
        times.append(time.perf_counter() - t0)
    return {
        "median_s": float(np.median(times)),
        "runs_s": times,
        "param_count": net.param_count(),
        "n_windows": sum(iv.n_windows for iv in result.intervals),
        "n_intervals": len(result.intervals),
    }
