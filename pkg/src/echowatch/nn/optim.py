"""Adam optimizer operating on the flat parameter vector."""

from __future__ import annotations

import numpy as np

from .params import NetParams


class NumericalError(RuntimeError):
    """Raised when training encounters non-finite values."""


def adam_step(
    params: NetParams,
    grads: np.ndarray | None = None,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> NetParams:
    """One Adam update with bias correction; mutates ``params`` in place."""
    g = params.grads if grads is None else np.asarray(grads, dtype=params.dtype)
    if g.shape != params.values.shape:
        raise ValueError("gradient vector shape mismatch")
    if not np.all(np.isfinite(g)):
        bad = int(np.count_nonzero(~np.isfinite(g)))
        raise NumericalError(f"non-finite gradient ({bad} entries); training halted")
    params.adam_t += 1
    t = params.adam_t
    params.adam_m *= beta1
    params.adam_m += (1 - beta1) * g
    params.adam_v *= beta2
    params.adam_v += (1 - beta2) * np.square(g)
    m_hat = params.adam_m / (1 - beta1**t)
    v_hat = params.adam_v / (1 - beta2**t)
    params.values -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(params.dtype)
    return params
