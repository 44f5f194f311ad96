"""Layer primitives with hand-derived backward passes.

Data layout is channels-last ``(batch, height, width, channels)``.
Convolutions are the usual cross-correlation; ``conv2d`` is the
standalone functional form (used by tests against a nested-loop oracle)
while the classes bind their parameters as views into a shared
:class:`~echowatch.nn.params.NetParams` vector and cache whatever the
backward pass needs.
"""

from __future__ import annotations

import numpy as np

from .params import NetParams


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Patches of a padded input: (B*H_out*W_out, kh*kw*C)."""
    b, h, w, c = x.shape
    view = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    # view: (B, H_out, W_out, C, kh, kw) -> (B*H_out*W_out, kh*kw*C)
    patches = view.transpose(0, 1, 2, 4, 5, 3)
    return np.ascontiguousarray(patches).reshape(b * (h - kh + 1) * (w - kw + 1), kh * kw * c)


def conv2d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray | None = None, padding: str = "same") -> np.ndarray:
    """2-D cross-correlation of ``(B,H,W,C_in)`` with ``(kh,kw,C_in,C_out)``."""
    x = np.asarray(x)
    kernel = np.asarray(kernel)
    if x.ndim != 4 or kernel.ndim != 4:
        raise ValueError("conv2d expects x (B,H,W,C) and kernel (kh,kw,C_in,C_out)")
    kh, kw, c_in, c_out = kernel.shape
    if x.shape[3] != c_in:
        raise ValueError(f"input has {x.shape[3]} channels, kernel expects {c_in}")
    if kh != kw:
        raise ValueError("only square kernels are supported")
    if padding == "same":
        if kh % 2 == 0:
            raise ValueError("same padding requires odd kernel sizes")
        p = kh // 2
        x = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    elif padding != "valid":
        raise ValueError(f"unknown padding {padding!r}")
    b, h, w, _ = x.shape
    h_out, w_out = h - kh + 1, w - kw + 1
    if h_out <= 0 or w_out <= 0:
        raise ValueError("kernel larger than input under valid padding")
    out, _ = _conv_same(x, kernel, h_out, w_out)
    if bias is not None:
        out += bias
    return out


class Layer:
    """Base: optional parameters, forward caching state for backward."""

    param_shapes: list[tuple[str, tuple[int, ...]]] = []

    def declare(self, prefix: str) -> list[tuple[str, tuple[int, ...]]]:
        return [(f"{prefix}.{name}", shape) for name, shape in self.param_shapes]

    def bind(self, params: NetParams, prefix: str) -> None:
        pass

    def init_params(self, rng: np.random.Generator) -> None:
        pass

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def _conv_same(xp: np.ndarray, kernel: np.ndarray, h: int, w: int, keep_cols: bool = False):
    """Correlation of a pre-padded input; returns (output, im2col or None).

    With few input channels the im2col matrix is cheap to build and one
    big GEMM wins; otherwise per-offset ``tensordot`` accumulation avoids
    the fine-grained gather entirely.
    """
    k, _, c_in, c_out = kernel.shape
    b = xp.shape[0]
    if k == 1:
        out = xp.reshape(-1, c_in) @ kernel.reshape(c_in, c_out)
        return out.reshape(b, h, w, c_out), None
    if c_in <= 2:
        cols = _im2col(xp, k, k)
        out = (cols @ kernel.reshape(-1, c_out)).reshape(b, h, w, c_out)
        return out, (cols if keep_cols else None)
    out = np.zeros((b, h, w, c_out), dtype=xp.dtype)
    for di in range(k):
        for dj in range(k):
            out += np.tensordot(xp[:, di : di + h, dj : dj + w], kernel[di, dj], axes=([3], [0]))
    return out, None


def _conv_dkernel(xp: np.ndarray, dy: np.ndarray, k: int, cols: np.ndarray | None = None) -> np.ndarray:
    """Kernel gradient: correlate the padded input with the output gradient."""
    b, h, w, c_out = dy.shape
    c_in = xp.shape[3]
    if k == 1:
        return (xp.reshape(-1, c_in).T @ dy.reshape(-1, c_out)).reshape(1, 1, c_in, c_out)
    if c_in <= 2:
        if cols is None:
            cols = _im2col(xp, k, k)
        return (cols.T @ dy.reshape(-1, c_out)).reshape(k, k, c_in, c_out)
    # per-sample batched GEMMs reduce far better than one huge-K product
    dy_b = dy.reshape(b, h * w, c_out)
    dk = np.empty((k, k, c_in, c_out), dtype=dy.dtype)
    for di in range(k):
        for dj in range(k):
            sl = np.ascontiguousarray(xp[:, di : di + h, dj : dj + w]).reshape(b, h * w, c_in)
            dk[di, dj] = np.matmul(sl.transpose(0, 2, 1), dy_b).sum(axis=0)
    return dk


class Conv2D(Layer):
    """Same-padded cross-correlation with bias."""

    def __init__(self, kernel_hw: int, c_in: int, c_out: int, needs_input_grad: bool = True):
        if kernel_hw % 2 == 0:
            raise ValueError("kernel size must be odd")
        self.k = kernel_hw
        self.c_in = c_in
        self.c_out = c_out
        self.needs_input_grad = needs_input_grad
        self._xp = None
        self.param_shapes = [("kernel", (self.k, self.k, c_in, c_out)), ("bias", (c_out,))]

    def bind(self, params: NetParams, prefix: str) -> None:
        self.kernel = params.view(f"{prefix}.kernel")
        self.bias = params.view(f"{prefix}.bias")
        self.d_kernel = params.grad_view(f"{prefix}.kernel")
        self.d_bias = params.grad_view(f"{prefix}.bias")

    def init_params(self, rng: np.random.Generator) -> None:
        fan_in = self.k * self.k * self.c_in
        self.kernel[...] = he_uniform(rng, self.kernel.shape, fan_in, self.kernel.dtype)
        self.bias[...] = 0

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if x.shape[3] != self.c_in:
            raise ValueError(f"expected {self.c_in} input channels, got {x.shape[3]}")
        pad = self.k // 2
        xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else x
        self._x_shape = x.shape
        b, h, w, _ = x.shape
        out, cols = _conv_same(xp, self.kernel, h, w, keep_cols=train)
        self._xp = xp if train else None
        self._cols = cols if train else None
        return out + self.bias

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._xp is None:
            raise RuntimeError("backward called without a training-mode forward pass")
        b, h, w, _ = self._x_shape
        self.d_kernel[...] += _conv_dkernel(self._xp, dy, self.k, cols=self._cols)
        self.d_bias[...] += dy.sum(axis=(0, 1, 2), dtype=np.float64).astype(self.d_bias.dtype)
        self._xp = None
        self._cols = None
        if not self.needs_input_grad:
            return np.zeros(self._x_shape, dtype=dy.dtype)
        # dx is the same-padded correlation of dy with the spatially flipped,
        # in/out-transposed kernel
        k_flip = np.ascontiguousarray(self.kernel[::-1, ::-1].transpose(0, 1, 3, 2))
        pad = self.k // 2
        dyp = np.pad(dy, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else dy
        dx, _ = _conv_same(dyp, k_flip, h, w)
        return dx


class ReLU(Layer):
    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        out = np.maximum(x, 0)
        self._out = out if train else None
        return out

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._out is None:
            raise RuntimeError("backward called without a training-mode forward pass")
        dx = dy * (self._out > 0)
        self._out = None
        return dx


class MaxPool2x2(Layer):
    """2x2 max pooling, stride 2; trailing odd rows/columns are dropped.

    The gradient routes to the first maximal element of each window in
    row-major order (matching ``argmax`` tie-breaking).
    """

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        b, h, w, c = x.shape
        h2, w2 = h // 2, w // 2
        if h2 < 1 or w2 < 1:
            raise ValueError(f"spatial dims {h}x{w} too small for 2x2 pooling")
        xe = x[:, : h2 * 2, : w2 * 2]
        quads = (xe[:, 0::2, 0::2], xe[:, 0::2, 1::2], xe[:, 1::2, 0::2], xe[:, 1::2, 1::2])
        out = np.maximum(np.maximum(quads[0], quads[1]), np.maximum(quads[2], quads[3]))
        if train:
            self._x_shape = x.shape
            self._quads = quads
            self._out = out
        return out

    def backward(self, dy: np.ndarray) -> np.ndarray:
        b, h, w, c = self._x_shape
        h2, w2 = h // 2, w // 2
        dx = np.zeros((b, h, w, c), dtype=dy.dtype)
        slots = (
            dx[:, 0 : h2 * 2 : 2, 0 : w2 * 2 : 2],
            dx[:, 0 : h2 * 2 : 2, 1 : w2 * 2 : 2],
            dx[:, 1 : h2 * 2 : 2, 0 : w2 * 2 : 2],
            dx[:, 1 : h2 * 2 : 2, 1 : w2 * 2 : 2],
        )
        taken = np.zeros(dy.shape, dtype=bool)
        for quad, slot in zip(self._quads, slots):
            hit = (quad == self._out) & ~taken
            slot[...] = dy * hit
            taken |= hit
        self._quads = None
        self._out = None
        return dx


class BatchNorm(Layer):
    """Channel-wise batch normalization with affine terms.

    Training uses batch statistics and updates exponential running
    statistics (used at inference). The default epsilon follows the
    common TF2 value; it also bounds the curvature a near-constant
    channel can produce.
    """

    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-3):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.param_shapes = [("scale", (channels,)), ("shift", (channels,))]
        self.running_mean = np.zeros(channels, dtype=np.float64)
        self.running_var = np.ones(channels, dtype=np.float64)

    def bind(self, params: NetParams, prefix: str) -> None:
        self.scale = params.view(f"{prefix}.scale")
        self.shift = params.view(f"{prefix}.shift")
        self.d_scale = params.grad_view(f"{prefix}.scale")
        self.d_shift = params.grad_view(f"{prefix}.shift")

    def init_params(self, rng: np.random.Generator) -> None:
        self.scale[...] = 1
        self.shift[...] = 0

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        axes = (0, 1, 2)
        if train:
            mean = x.mean(axis=axes, dtype=np.float64)
            var = x.var(axis=axes, dtype=np.float64)
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean.astype(x.dtype)) * inv_std.astype(x.dtype)
        self._x_hat = x_hat if train else None
        if train:
            self._inv_std = inv_std.astype(x.dtype)
        return self.scale * x_hat + self.shift

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._x_hat is None:
            raise RuntimeError("backward called without a training-mode forward pass")
        axes = (0, 1, 2)
        n = dy.shape[0] * dy.shape[1] * dy.shape[2]
        dy_xhat = dy * self._x_hat
        sum_dy = dy.sum(axis=axes, dtype=np.float64)
        sum_dy_xhat = dy_xhat.sum(axis=axes, dtype=np.float64)
        self.d_shift[...] += sum_dy.astype(self.d_shift.dtype)
        self.d_scale[...] += sum_dy_xhat.astype(self.d_scale.dtype)
        mean_dy = (sum_dy / n).astype(dy.dtype)
        mean_dy_xhat = (sum_dy_xhat / n).astype(dy.dtype)
        dx = (self.scale * self._inv_std) * (dy - mean_dy - self._x_hat * mean_dy_xhat)
        self._x_hat = None
        return dx


class Flatten(Layer):
    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy.reshape(self._shape)


class Dense(Layer):
    def __init__(self, d_in: int, d_out: int):
        self.d_in = d_in
        self.d_out = d_out
        self.param_shapes = [("weight", (d_in, d_out)), ("bias", (d_out,))]

    def bind(self, params: NetParams, prefix: str) -> None:
        self.weight = params.view(f"{prefix}.weight")
        self.bias = params.view(f"{prefix}.bias")
        self.d_weight = params.grad_view(f"{prefix}.weight")
        self.d_bias = params.grad_view(f"{prefix}.bias")

    def init_params(self, rng: np.random.Generator) -> None:
        self.weight[...] = he_uniform(rng, self.weight.shape, self.d_in, self.weight.dtype)
        self.bias[...] = 0

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        self._x = x
        return x @ self.weight + self.bias

    def backward(self, dy: np.ndarray) -> np.ndarray:
        self.d_weight[...] += self._x.T @ dy
        self.d_bias[...] += dy.sum(axis=0, dtype=np.float64).astype(self.d_bias.dtype)
        dx = dy @ self.weight.T
        self._x = None
        return dx


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def xent_loss(y_true: np.ndarray, y_pred: np.ndarray, eps: float = 1e-12) -> float:
    """Mean categorical cross-entropy of one-hot targets vs probabilities."""
    y_true = np.atleast_2d(y_true)
    y_pred = np.atleast_2d(y_pred)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred shapes differ")
    p = np.clip(y_pred.astype(np.float64), eps, None)
    return float(-(y_true * np.log(p)).sum(axis=1).mean())


def xent_grad_logits(y_true: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Gradient of mean cross-entropy w.r.t. logits: (p - y) / batch."""
    return (probs - y_true) / y_true.shape[0]
