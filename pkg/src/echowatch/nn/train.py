"""Mini-batch training with Adam and accuracy-based early stopping.

The validation split is carved out of the training data at the clip
level (all windows of a clip stay on one side), so early stopping never
sees near-duplicate windows of training clips. Training keeps the
parameters of the best validation epoch and restores them on exit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import softmax, xent_grad_logits, xent_loss
from .network import Network
from .optim import adam_step


@dataclass
class WindowDataset:
    """Labeled classifier inputs: windows (N, F, T), labels and clip ids (N,)."""

    windows: np.ndarray
    labels: np.ndarray
    clip_ids: np.ndarray

    def __post_init__(self):
        self.windows = np.asarray(self.windows)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.clip_ids = np.asarray(self.clip_ids)
        n = self.windows.shape[0]
        if self.labels.shape != (n,) or self.clip_ids.shape != (n,):
            raise ValueError("windows, labels, and clip_ids must agree in length")

    @property
    def n_windows(self) -> int:
        return self.windows.shape[0]

    def subset(self, mask: np.ndarray) -> "WindowDataset":
        return WindowDataset(self.windows[mask], self.labels[mask], self.clip_ids[mask])


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    max_epochs: int = 60
    patience: int = 10
    val_fraction: float = 0.15
    seed: int = 0


def split_clips_by_class(labels: np.ndarray, clip_ids: np.ndarray, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Stratified clip-level split; returns (held-out clip ids, remaining clip ids)."""
    held, rest = [], []
    for cls in np.unique(labels):
        clips = np.unique(clip_ids[labels == cls])
        clips = clips[rng.permutation(len(clips))]
        n_held = int(round(fraction * len(clips)))
        held.extend(clips[:n_held])
        rest.extend(clips[n_held:])
    return np.array(held), np.array(rest)


def one_hot(labels: np.ndarray, n_classes: int = 5) -> np.ndarray:
    out = np.zeros((labels.shape[0], n_classes), dtype=np.float64)
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def predict_batched(net: Network, windows: np.ndarray, batch_size: int = 512) -> np.ndarray:
    """Eval-mode class probabilities, computed in batches."""
    parts = [
        net.forward_batch(windows[i : i + batch_size])
        for i in range(0, windows.shape[0], batch_size)
    ]
    return np.concatenate(parts, axis=0) if parts else np.zeros((0, 5))


def accuracy(net: Network, dataset: WindowDataset, batch_size: int = 512) -> float:
    probs = predict_batched(net, dataset.windows, batch_size)
    return float(np.mean(probs.argmax(axis=1) == dataset.labels))


def train(net: Network, dataset: WindowDataset, cfg: TrainConfig = TrainConfig()) -> list[dict]:
    """Train in place; returns per-epoch history rows.

    Early stopping monitors validation accuracy (training accuracy when
    ``val_fraction`` is 0) and stops after ``patience`` epochs without
    improvement; the best epoch's parameters and batch-norm statistics are
    restored before returning.
    """
    if np.unique(dataset.labels).size < 2:
        raise ValueError("training data must contain at least 2 classes")
    rng = np.random.default_rng(cfg.seed)

    if cfg.val_fraction > 0:
        val_clips, _ = split_clips_by_class(dataset.labels, dataset.clip_ids, cfg.val_fraction, rng)
        val_mask = np.isin(dataset.clip_ids, val_clips)
        val_set = dataset.subset(val_mask)
        train_set = dataset.subset(~val_mask)
        if np.unique(train_set.labels).size < 2:
            raise ValueError("training split degenerate after validation carve-out")
    else:
        train_set, val_set = dataset, None

    y_onehot = one_hot(train_set.labels)
    n = train_set.n_windows
    best_metric = -np.inf
    best_state: tuple[np.ndarray, list] | None = None
    epochs_since_best = 0
    history: list[dict] = []

    for epoch in range(cfg.max_epochs):
        perm = rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            xb = train_set.windows[idx]
            yb = y_onehot[idx]
            net.params.zero_grad()
            logits = net.logits(xb, train=True)
            probs = softmax(logits)
            loss = xent_loss(yb, probs)
            net.backward_from_logits(xent_grad_logits(yb, probs))
            adam_step(net.params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
            loss_sum += loss * idx.shape[0]
            correct += int(np.sum(probs.argmax(axis=1) == train_set.labels[idx]))

        train_loss = loss_sum / n
        train_acc = correct / n
        val_acc = accuracy(net, val_set) if val_set is not None and val_set.n_windows else float("nan")
        monitored = val_acc if val_set is not None and val_set.n_windows else train_acc
        history.append(
            {"epoch": epoch, "train_loss": train_loss, "train_acc": train_acc, "val_acc": val_acc}
        )

        if monitored > best_metric:
            best_metric = monitored
            best_state = (net.params.copy_state(), net.bn_state())
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= cfg.patience:
                break

    if best_state is not None:
        net.params.load_state(best_state[0])
        net.load_bn_state(best_state[1])
    return history


def history_csv_rows(history: list[dict]) -> list[list[str]]:
    """Rows (with header) for the training-history CSV artifact."""
    rows = [["epoch", "train_loss", "train_acc", "val_acc"]]
    for h in history:
        rows.append([str(h["epoch"]), repr(h["train_loss"]), repr(h["train_acc"]), repr(h["val_acc"])])
    return rows
