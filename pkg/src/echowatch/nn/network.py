"""Classifier architectures assembled from the layer primitives.

Two architectures share every primitive and the flat parameter store:

* :class:`InceptionConfig` - stacked multi-scale blocks. Each block runs
  parallel paths (one per kernel size): conv -> ReLU -> 2x2 max-pool ->
  batch-norm -> 1x1 projection -> ReLU, and concatenates the projected
  outputs along channels. A config switch moves batch-norm directly after
  the conv instead.
* :class:`PlainCnnConfig` - single-path stacked conv/pool blocks, the
  "without multi-scale paths" baseline.

Both end in flatten -> (optional hidden dense + ReLU) -> dense -> softmax.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np

from .layers import BatchNorm, Conv2D, Dense, Flatten, Layer, MaxPool2x2, ReLU, softmax
from .params import NetParams

WEIGHTS_MAGIC = b"EWNET1\n"

STAGE_ORDERS = ("relu_pool_bn", "bn_relu_pool")


@dataclass(frozen=True)
class InceptionConfig:
    input_shape: tuple[int, int] = (150, 24)
    kernel_sizes: tuple[int, ...] = (1, 3, 5)
    path_channels: tuple[tuple[int, ...], ...] = ((4, 4, 4), (8, 6, 4))
    proj_channels: tuple[tuple[int, ...], ...] = ((4, 4, 8), (4, 4, 8))
    mlp_hidden: int = 0      # >0 inserts a hidden dense+ReLU before the output layer
    n_classes: int = 5
    stage_order: str = "relu_pool_bn"
    bn_momentum: float = 0.9
    input_norm: bool = True      # standardize the raw window intensities
    seed: int = 0

    def __post_init__(self):
        if self.n_classes != 5:
            raise ValueError("classifier is fixed at 5 classes")
        if any(k % 2 == 0 or k < 1 for k in self.kernel_sizes):
            raise ValueError("kernel sizes must be odd")
        if len(self.path_channels) != len(self.proj_channels):
            raise ValueError("path_channels and proj_channels must list the same block count")
        for ch, proj in zip(self.path_channels, self.proj_channels):
            if len(ch) != len(self.kernel_sizes) or len(proj) != len(self.kernel_sizes):
                raise ValueError("per-block channel tuples must match the number of kernel paths")
        if self.stage_order not in STAGE_ORDERS:
            raise ValueError(f"stage_order must be one of {STAGE_ORDERS}")

    @property
    def n_blocks(self) -> int:
        return len(self.path_channels)


@dataclass(frozen=True)
class PlainCnnConfig:
    input_shape: tuple[int, int] = (150, 24)
    kernel_size: int = 3
    channels: tuple[int, ...] = (4, 6, 6)
    mlp_hidden: int = 0
    n_classes: int = 5
    stage_order: str = "relu_pool_bn"
    bn_momentum: float = 0.9
    input_norm: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_classes != 5:
            raise ValueError("classifier is fixed at 5 classes")
        if self.kernel_size % 2 == 0:
            raise ValueError("kernel size must be odd")
        if self.stage_order not in STAGE_ORDERS:
            raise ValueError(f"stage_order must be one of {STAGE_ORDERS}")


class Sequential(Layer):
    def __init__(self, named_layers: list[tuple[str, Layer]]):
        self.named_layers = named_layers

    def declare(self, prefix: str) -> list[tuple[str, tuple[int, ...]]]:
        entries = []
        for name, layer in self.named_layers:
            entries.extend(layer.declare(f"{prefix}.{name}"))
        return entries

    def bind(self, params: NetParams, prefix: str) -> None:
        for name, layer in self.named_layers:
            layer.bind(params, f"{prefix}.{name}")

    def init_params(self, rng: np.random.Generator) -> None:
        for _, layer in self.named_layers:
            layer.init_params(rng)

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        for _, layer in self.named_layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for _, layer in reversed(self.named_layers):
            dy = layer.backward(dy)
        return dy

    def iter_layers(self):
        for _, layer in self.named_layers:
            if isinstance(layer, (Sequential, InceptionBlock)):
                yield from layer.iter_layers()
            else:
                yield layer


def _path_stages(kernel: int, c_in: int, channels: int, proj: int, stage_order: str, momentum: float, first: bool = False) -> Sequential:
    conv = Conv2D(kernel, c_in, channels, needs_input_grad=not first)
    if stage_order == "relu_pool_bn":
        stages = [("conv", conv), ("relu", ReLU()), ("pool", MaxPool2x2()), ("bn", BatchNorm(channels, momentum))]
    else:
        stages = [("conv", conv), ("bn", BatchNorm(channels, momentum)), ("relu", ReLU()), ("pool", MaxPool2x2())]
    stages += [("proj", Conv2D(1, channels, proj)), ("proj_relu", ReLU())]
    return Sequential(stages)


class InceptionBlock(Layer):
    """Parallel multi-scale paths whose projections are channel-concatenated."""

    def __init__(self, c_in: int, kernel_sizes, channels, projections, stage_order: str, momentum: float, first: bool = False):
        self.paths = [
            (f"path{i}", _path_stages(k, c_in, ch, proj, stage_order, momentum, first))
            for i, (k, ch, proj) in enumerate(zip(kernel_sizes, channels, projections))
        ]
        self.out_channels = int(sum(projections))
        self._splits = list(projections)

    def declare(self, prefix: str) -> list[tuple[str, tuple[int, ...]]]:
        entries = []
        for name, path in self.paths:
            entries.extend(path.declare(f"{prefix}.{name}"))
        return entries

    def bind(self, params: NetParams, prefix: str) -> None:
        for name, path in self.paths:
            path.bind(params, f"{prefix}.{name}")

    def init_params(self, rng: np.random.Generator) -> None:
        for _, path in self.paths:
            path.init_params(rng)

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        outs = [path.forward(x, train) for _, path in self.paths]
        out = np.concatenate(outs, axis=3)
        assert out.shape[3] == self.out_channels, "concat channel bookkeeping broke"
        return out

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dx = None
        start = 0
        for (_, path), width in zip(self.paths, self._splits):
            d_path = path.backward(np.ascontiguousarray(dy[..., start : start + width]))
            dx = d_path if dx is None else dx + d_path
            start += width
        return dx

    def iter_layers(self):
        for _, path in self.paths:
            yield from path.iter_layers()


def _build_trunk(config) -> tuple[Sequential, tuple[int, int, int]]:
    h, w = config.input_shape
    layers: list[tuple[str, Layer]] = []
    c_in = 1
    if config.input_norm:
        layers.append(("stem_bn", BatchNorm(1, config.bn_momentum)))
    if isinstance(config, InceptionConfig):
        for b in range(config.n_blocks):
            block = InceptionBlock(
                c_in, config.kernel_sizes, config.path_channels[b], config.proj_channels[b],
                config.stage_order, config.bn_momentum,
                first=(b == 0 and not config.input_norm),
            )
            layers.append((f"block{b}", block))
            c_in = block.out_channels
            h, w = h // 2, w // 2
    else:
        for b, ch in enumerate(config.channels):
            conv = Conv2D(config.kernel_size, c_in, ch, needs_input_grad=(b > 0 or config.input_norm))
            if config.stage_order == "relu_pool_bn":
                stages = [("conv", conv), ("relu", ReLU()), ("pool", MaxPool2x2()), ("bn", BatchNorm(ch, config.bn_momentum))]
            else:
                stages = [("conv", conv), ("bn", BatchNorm(ch, config.bn_momentum)), ("relu", ReLU()), ("pool", MaxPool2x2())]
            layers.append((f"block{b}", Sequential(stages)))
            c_in = ch
            h, w = h // 2, w // 2
        if h < 1 or w < 1:
            raise ValueError("too many pooling stages for the input size")

    layers.append(("flatten", Flatten()))
    flat = h * w * c_in
    if config.mlp_hidden > 0:
        layers.append(("hidden", Dense(flat, config.mlp_hidden)))
        layers.append(("hidden_relu", ReLU()))
        flat = config.mlp_hidden
    layers.append(("out", Dense(flat, config.n_classes)))
    return Sequential(layers), (h, w, c_in)


class Network:
    """A configured classifier: flat parameters, forward/backward, (de)serialization."""

    def __init__(self, config: InceptionConfig | PlainCnnConfig, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.trunk, self._trunk_shape = _build_trunk(config)
        self.params = NetParams(self.trunk.declare("net"), dtype=self.dtype)
        self.trunk.bind(self.params, "net")
        self.trunk.init_params(np.random.default_rng(config.seed))

    @property
    def arch(self) -> str:
        return "inception" if isinstance(self.config, InceptionConfig) else "plain"

    def param_count(self) -> int:
        return self.params.param_count()

    def _prep(self, windows: np.ndarray) -> np.ndarray:
        x = np.asarray(windows, dtype=self.dtype)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3:
            raise ValueError("expected (batch, bins, frames) windows")
        expected = tuple(self.config.input_shape)
        if x.shape[1:] != expected:
            raise ValueError(f"window shape {x.shape[1:]} != configured {expected}")
        return x[..., None]

    def logits(self, windows: np.ndarray, train: bool = False) -> np.ndarray:
        return self.trunk.forward(self._prep(windows), train)

    def forward_batch(self, windows: np.ndarray, train: bool = False) -> np.ndarray:
        """Class probabilities, one row per window."""
        return softmax(self.logits(windows, train))

    def forward_window(self, window: np.ndarray) -> np.ndarray:
        """Probability vector for a single bins x frames window."""
        return self.forward_batch(window[None] if window.ndim == 2 else window)[0]

    def backward_from_logits(self, d_logits: np.ndarray) -> None:
        self.trunk.backward(d_logits.astype(self.dtype))

    def batchnorm_layers(self) -> list[BatchNorm]:
        return [l for l in self.trunk.iter_layers() if isinstance(l, BatchNorm)]

    def bn_state(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return [(l.running_mean.copy(), l.running_var.copy()) for l in self.batchnorm_layers()]

    def load_bn_state(self, state: list[tuple[np.ndarray, np.ndarray]]) -> None:
        layers = self.batchnorm_layers()
        if len(layers) != len(state):
            raise ValueError("batch-norm state count mismatch")
        for layer, (mean, var) in zip(layers, state):
            layer.running_mean = np.array(mean, dtype=np.float64)
            layer.running_var = np.array(var, dtype=np.float64)

    # -- persistence ------------------------------------------------------

    def save(self, path) -> None:
        header = {
            "format_version": 1,
            "arch": self.arch,
            "config": _config_to_dict(self.config),
            "dtype": self.dtype.name,
            "manifest": [[name, list(shape)] for name, shape in self.params.manifest],
            "n_bn_layers": len(self.batchnorm_layers()),
        }
        blob = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(WEIGHTS_MAGIC)
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(self.params.values.astype(np.float32).tobytes())
            for mean, var in self.bn_state():
                fh.write(mean.astype(np.float64).tobytes())
                fh.write(var.astype(np.float64).tobytes())

    @classmethod
    def load(cls, path) -> "Network":
        with open(path, "rb") as fh:
            magic = fh.read(len(WEIGHTS_MAGIC))
            if magic != WEIGHTS_MAGIC:
                raise ValueError(f"{path}: not a network weights file")
            (header_len,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(header_len).decode())
            if header["format_version"] != 1:
                raise ValueError(f"unsupported weights format {header['format_version']}")
            config = _config_from_dict(header["arch"], header["config"])
            net = cls(config, dtype=np.dtype(header["dtype"]))
            saved = [(name, tuple(shape)) for name, shape in header["manifest"]]
            if saved != net.params.manifest:
                raise ValueError("weights manifest does not match the configured architecture")
            raw = fh.read(4 * net.params.n_params)
            net.params.values[:] = np.frombuffer(raw, dtype=np.float32).astype(net.dtype)
            state = []
            for layer in net.batchnorm_layers():
                c = layer.channels
                mean = np.frombuffer(fh.read(8 * c), dtype=np.float64)
                var = np.frombuffer(fh.read(8 * c), dtype=np.float64)
                state.append((mean, var))
            net.load_bn_state(state)
        return net


def _config_to_dict(config) -> dict:
    d = dataclasses.asdict(config)

    def listify(v):
        if isinstance(v, tuple):
            return [listify(i) for i in v]
        return v

    return {k: listify(v) for k, v in d.items()}


def _config_from_dict(arch: str, d: dict):
    def tuplify(v):
        if isinstance(v, list):
            return tuple(tuplify(i) for i in v)
        return v

    kwargs = {k: tuplify(v) for k, v in d.items()}
    if arch == "inception":
        return InceptionConfig(**kwargs)
    if arch == "plain":
        return PlainCnnConfig(**kwargs)
    raise ValueError(f"unknown architecture {arch!r}")
