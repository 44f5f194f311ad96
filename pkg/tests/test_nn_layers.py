"""Layer tests: brute-force conv oracle, finite-difference gradients."""

import numpy as np
import pytest

from echowatch.nn import (
    InceptionConfig,
    Network,
    PlainCnnConfig,
    adam_step,
    conv2d,
    one_hot,
    softmax,
    xent_grad_logits,
    xent_loss,
)
from echowatch.nn.layers import BatchNorm, Conv2D, Dense, MaxPool2x2, ReLU
from echowatch.nn.optim import NumericalError
from echowatch.nn.params import NetParams
from helpers import bias_shift, fd_gradient_check


def conv2d_naive(x, kernel, bias=None, padding="same"):
    """Quadruple-loop convolution oracle."""
    b, h, w, c_in = x.shape
    kh, kw, _, c_out = kernel.shape
    if padding == "same":
        ph, pw = kh // 2, kw // 2
        xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
        h_out, w_out = h, w
    else:
        xp = x
        h_out, w_out = h - kh + 1, w - kw + 1
    out = np.zeros((b, h_out, w_out, c_out))
    for n in range(b):
        for i in range(h_out):
            for j in range(w_out):
                for f in range(c_out):
                    acc = 0.0
                    for di in range(kh):
                        for dj in range(kw):
                            for c in range(c_in):
                                acc += xp[n, i + di, j + dj, c] * kernel[di, dj, c, f]
                    out[n, i, j, f] = acc + (bias[f] if bias is not None else 0.0)
    return out


class TestConv2d:
    def test_ones_valid_padding(self):
        x = np.ones((1, 3, 3, 1))
        k = np.ones((3, 3, 1, 1))
        out = conv2d(x, k, padding="valid")
        assert out.shape == (1, 1, 1, 1)
        assert out[0, 0, 0, 0] == pytest.approx(9.0)

    def test_identity_1x1_kernel(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((2, 4, 5, 3))
        k = np.eye(3).reshape(1, 1, 3, 3)
        np.testing.assert_allclose(conv2d(x, k), x, atol=1e-12)

    @pytest.mark.parametrize("kernel_size,c_in,c_out", [(3, 1, 2), (5, 3, 4), (1, 4, 2), (3, 4, 3)])
    def test_against_naive_oracle(self, kernel_size, c_in, c_out):
        rng = np.random.default_rng(kernel_size * 10 + c_in)
        x = rng.standard_normal((2, 5, 5, c_in))
        k = rng.standard_normal((kernel_size, kernel_size, c_in, c_out))
        b = rng.standard_normal(c_out)
        np.testing.assert_allclose(conv2d(x, k, b), conv2d_naive(x, k, b), atol=1e-6)
        np.testing.assert_allclose(
            conv2d(x, k, b, padding="valid"), conv2d_naive(x, k, b, padding="valid"), atol=1e-6
        )

    def test_channel_mismatch_rejected(self):
        with pytest.raises(ValueError):
            conv2d(np.zeros((1, 4, 4, 2)), np.zeros((3, 3, 3, 1)))

    def test_even_kernel_same_rejected(self):
        with pytest.raises(ValueError):
            conv2d(np.zeros((1, 4, 4, 1)), np.zeros((2, 2, 1, 1)), padding="same")


class TestSoftmaxXent:
    def test_softmax_uniform_on_equal_logits(self):
        p = softmax(np.zeros((3, 5)))
        np.testing.assert_allclose(p, 0.2)

    def test_softmax_valid_distribution(self):
        rng = np.random.default_rng(1)
        p = softmax(rng.standard_normal((100, 5)) * 30)
        assert np.all(p >= 0)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)

    def test_xent_analytic_values(self):
        y = one_hot(np.array([2]))
        perfect = np.zeros((1, 5)); perfect[0, 2] = 1.0
        assert xent_loss(y, perfect) == pytest.approx(0.0, abs=1e-9)
        assert xent_loss(y, np.full((1, 5), 0.2)) == pytest.approx(np.log(5.0), abs=1e-9)
        half = np.full((1, 5), 0.125); half[0, 2] = 0.5
        assert xent_loss(y, half) == pytest.approx(np.log(2.0), abs=1e-9)

    def test_xent_clamps_zero_probability(self):
        y = one_hot(np.array([0]))
        p = np.zeros((1, 5)); p[0, 1] = 1.0
        assert np.isfinite(xent_loss(y, p))

    def test_grad_logits_matches_fd(self):
        rng = np.random.default_rng(2)
        logits = rng.standard_normal((3, 5))
        y = one_hot(rng.integers(0, 5, size=3))
        probs = softmax(logits)
        grad = xent_grad_logits(y, probs)
        h = 1e-6
        for i in range(3):
            for j in range(5):
                lp = logits.copy(); lp[i, j] += h
                lm = logits.copy(); lm[i, j] -= h
                fd = (xent_loss(y, softmax(lp)) - xent_loss(y, softmax(lm))) / (2 * h)
                assert grad[i, j] == pytest.approx(fd, abs=1e-6)


def layer_grad_check(layer, x_shape, seed=0, h=1e-4, tol=1e-4):
    """Central finite differences vs analytic gradients for one layer."""
    rng = np.random.default_rng(seed)
    manifest = layer.declare("l")
    params = NetParams(manifest, dtype=np.float64)
    layer.bind(params, "l")
    layer.init_params(rng)
    if params.n_params:
        params.values[:] = rng.standard_normal(params.n_params) * 0.5
    x = rng.standard_normal(x_shape)
    w_out = rng.standard_normal(layer.forward(x, train=True).shape)

    def loss_fn():
        return float((layer.forward(x, train=True) * w_out).sum())

    params.zero_grad()
    layer.forward(x, train=True)
    dx = layer.backward(w_out.copy())

    for i in range(params.n_params):
        orig = params.values[i]
        params.values[i] = orig + h
        lp = loss_fn()
        params.values[i] = orig - h
        lm = loss_fn()
        params.values[i] = orig
        fd = (lp - lm) / (2 * h)
        denom = max(abs(fd), abs(params.grads[i]), 1e-6)
        assert abs(fd - params.grads[i]) / denom < tol, f"param {i}: fd {fd} vs {params.grads[i]}"

    flat = x.reshape(-1)
    idx = rng.choice(flat.size, size=min(60, flat.size), replace=False)
    for i in idx:
        orig = flat[i]
        flat[i] = orig + h
        lp = loss_fn()
        flat[i] = orig - h
        lm = loss_fn()
        flat[i] = orig
        fd = (lp - lm) / (2 * h)
        an = dx.reshape(-1)[i]
        denom = max(abs(fd), abs(an), 1e-6)
        assert abs(fd - an) / denom < tol, f"input {i}: fd {fd} vs {an}"


class TestLayerGradients:
    def test_conv_small_channels(self):
        layer_grad_check(Conv2D(3, 1, 2), (2, 6, 5, 1), seed=1)

    def test_conv_many_channels(self):
        layer_grad_check(Conv2D(5, 4, 3), (2, 6, 5, 4), seed=2)

    def test_conv_1x1(self):
        layer_grad_check(Conv2D(1, 3, 2), (2, 4, 4, 3), seed=3)

    def test_dense(self):
        layer_grad_check(Dense(12, 7), (4, 12), seed=4)

    def test_batchnorm(self):
        layer_grad_check(BatchNorm(3), (3, 4, 4, 3), seed=5)

    def test_relu_and_pool_input_grads(self):
        layer_grad_check(ReLU(), (2, 4, 4, 2), seed=6)
        layer_grad_check(MaxPool2x2(), (2, 6, 6, 2), seed=7)

    def test_pool_odd_dims_drop_edges(self):
        x = np.arange(2 * 5 * 3 * 1, dtype=np.float64).reshape(2, 5, 3, 1)
        pool = MaxPool2x2()
        out = pool.forward(x, train=True)
        assert out.shape == (2, 2, 1, 1)
        dy = np.ones_like(out)
        dx = pool.backward(dy)
        assert np.all(dx[:, 4, :, :] == 0.0)
        assert np.all(dx[:, :, 2, :] == 0.0)

    def test_backward_without_forward_rejected(self):
        conv = Conv2D(3, 1, 1)
        params = NetParams(conv.declare("c"), dtype=np.float64)
        conv.bind(params, "c")
        with pytest.raises(RuntimeError, match="forward"):
            conv.backward(np.zeros((1, 4, 4, 1)))


class TestAdam:
    def _scalar_params(self, value=0.0):
        params = NetParams([("w", (1,))], dtype=np.float64)
        params.values[0] = value
        return params

    def test_first_step_is_signed_lr(self):
        params = self._scalar_params()
        adam_step(params, grads=np.array([0.5]), lr=1e-3)
        assert params.values[0] == pytest.approx(-1e-3, rel=1e-6)

    def test_zero_gradient_no_motion(self):
        params = self._scalar_params(1.5)
        for _ in range(10):
            adam_step(params, grads=np.array([0.0]), lr=1e-3)
        assert params.values[0] == 1.5

    def test_deterministic_trajectory(self):
        rng = np.random.default_rng(8)
        grads = rng.standard_normal((20, 4))
        trajs = []
        for _ in range(2):
            params = NetParams([("w", (4,))], dtype=np.float64)
            for g in grads:
                adam_step(params, grads=g)
            trajs.append(params.values.copy())
        assert np.array_equal(trajs[0], trajs[1])

    def test_nonfinite_gradient_halts(self):
        params = self._scalar_params()
        with pytest.raises(NumericalError, match="non-finite"):
            adam_step(params, grads=np.array([np.nan]))

    def test_bias_correction_against_reference(self):
        # hand-rolled reference recursion
        params = NetParams([("w", (1,))], dtype=np.float64)
        g_seq = [0.3, -0.2, 0.7]
        m = v = 0.0
        w_ref = 0.0
        lr, b1, b2, eps = 1e-2, 0.9, 0.999, 1e-8
        for t, g in enumerate(g_seq, start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            w_ref -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        for g in g_seq:
            adam_step(params, grads=np.array([g]), lr=lr, beta1=b1, beta2=b2, eps=eps)
        assert params.values[0] == pytest.approx(w_ref, rel=1e-12)


class TestNetworkGradient:
    """End-to-end finite-difference check on tiny two-block networks."""

    def _check(self, net, n_sample, seed=0):
        bias_shift(net)
        n, failures = fd_gradient_check(net, n_sample, seed=seed)
        assert not failures, f"{len(failures)}/{n} mismatches, e.g. {failures[:3]}"

    def test_inception_two_paths(self):
        cfg = InceptionConfig(
            input_shape=(12, 8), kernel_sizes=(1, 3), path_channels=((2, 2), (2, 2)),
            proj_channels=((2, 2), (2, 2)), mlp_hidden=4, seed=11,
        )
        self._check(Network(cfg, dtype=np.float64), n_sample=400, seed=12)

    def test_plain_cnn(self):
        cfg = PlainCnnConfig(input_shape=(12, 8), channels=(3, 4), mlp_hidden=0, seed=13)
        self._check(Network(cfg, dtype=np.float64), n_sample=400, seed=14)

    def test_alternate_stage_order(self):
        cfg = InceptionConfig(
            input_shape=(10, 8), kernel_sizes=(3,), path_channels=((2,), (2,)),
            proj_channels=((2,), (2,)), mlp_hidden=0, stage_order="bn_relu_pool", seed=15,
        )
        self._check(Network(cfg, dtype=np.float64), n_sample=300, seed=16)
