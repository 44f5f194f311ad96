"""Shared test oracles: finite-difference gradient checking."""

import numpy as np

from echowatch.nn import Network, one_hot, softmax, xent_grad_logits, xent_loss


def bias_shift(net: Network, offset: float = 0.3) -> None:
    """Push every bias positive so ReLU kinks sit far from the FD probe."""
    for name, _ in net.params.manifest:
        if name.endswith(".bias") or name.endswith(".shift"):
            net.params.view(name)[...] += offset


def fd_gradient_check(net: Network, n_sample: int, batch: int = 32, h: float = 1e-4,
                      seed: int = 0, tol: float = 1e-4):
    """Central finite differences vs analytic gradients on sampled parameters.

    Returns (n_checked, failures) where failures lists
    (param_index, fd, analytic, rel_error).
    """
    rng = np.random.default_rng(seed)
    x = rng.random((batch, *net.config.input_shape))
    y = one_hot(rng.integers(0, 5, size=batch))

    def loss_fn():
        return xent_loss(y, softmax(net.logits(x, train=True)))

    net.params.zero_grad()
    probs = softmax(net.logits(x, train=True))
    net.backward_from_logits(xent_grad_logits(y, probs))
    analytic = net.params.grads.copy()

    n = min(n_sample, net.params.n_params)
    idx = rng.choice(net.params.n_params, size=n, replace=False)
    failures = []
    for i in idx:
        orig = net.params.values[i]
        net.params.values[i] = orig + h
        lp = loss_fn()
        net.params.values[i] = orig - h
        lm = loss_fn()
        net.params.values[i] = orig
        fd = (lp - lm) / (2 * h)
        if max(abs(fd), abs(analytic[i])) < 1e-7:
            continue  # both effectively zero; below FD resolution
        denom = max(abs(fd), abs(analytic[i]))
        rel = abs(fd - analytic[i]) / denom
        if rel >= tol:
            failures.append((int(i), fd, float(analytic[i]), rel))
    return n, failures
