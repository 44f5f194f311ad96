"""Flat parameter storage with a per-layer shape manifest.

All trainable tensors live in one flat vector; each named entry is a
reshaped view into it, so layer code, the optimizer, and serialization
all see the same memory. A gradient vector and Adam moment vectors are
kept in identical layout.
"""

from __future__ import annotations

import numpy as np


class NetParams:
    """Parameter, gradient, and Adam-state vectors plus the shape manifest."""

    def __init__(self, manifest: list[tuple[str, tuple[int, ...]]], dtype=np.float32):
        names = [name for name, _ in manifest]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names in manifest")
        self.manifest = [(name, tuple(shape)) for name, shape in manifest]
        self.dtype = np.dtype(dtype)
        self._slices: dict[str, tuple[slice, tuple[int, ...]]] = {}
        offset = 0
        for name, shape in self.manifest:
            size = int(np.prod(shape)) if shape else 1
            self._slices[name] = (slice(offset, offset + size), tuple(shape))
            offset += size
        self.n_params = offset
        self.values = np.zeros(offset, dtype=self.dtype)
        self.grads = np.zeros(offset, dtype=self.dtype)
        self.adam_m = np.zeros(offset, dtype=self.dtype)
        self.adam_v = np.zeros(offset, dtype=self.dtype)
        self.adam_t = 0

    def view(self, name: str) -> np.ndarray:
        sl, shape = self._slices[name]
        return self.values[sl].reshape(shape)

    def grad_view(self, name: str) -> np.ndarray:
        sl, shape = self._slices[name]
        return self.grads[sl].reshape(shape)

    def zero_grad(self) -> None:
        self.grads[:] = 0

    def param_count(self) -> int:
        return self.n_params

    def copy_state(self) -> np.ndarray:
        return self.values.copy()

    def load_state(self, values: np.ndarray) -> None:
        if values.shape != self.values.shape:
            raise ValueError("parameter vector shape mismatch")
        self.values[:] = values.astype(self.dtype)


def param_count(params: NetParams) -> int:
    """Total number of trainable scalars, biases and BN affine terms included."""
    return params.param_count()
