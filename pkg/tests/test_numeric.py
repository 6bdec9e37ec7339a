"""Tests for the MLP forward/backward primitives and the gradient checker."""

import numpy as np
import pytest

from radioplan.numeric import (
    Activation,
    DimensionMismatch,
    MlpParams,
    grad_check,
    mlp_backward,
    mlp_forward,
    xavier_init,
)


def identity_params(dim=3):
    return MlpParams(
        weights=[np.eye(dim)], biases=[np.zeros(dim)], activation=Activation.IDENTITY
    )


class TestForward:
    def test_identity_network(self):
        x = np.array([1.5, -2.0, 0.25])
        y, _ = mlp_forward(identity_params(), x)
        assert np.array_equal(y, x)

    def test_single_relu_layer_hand_arithmetic(self):
        p = MlpParams(weights=[np.array([[2.0]])], biases=[np.array([1.0])],
                      activation=Activation.RELU)
        y, _ = mlp_forward(p, np.array([3.0]))
        assert y == pytest.approx(7.0)

    def test_relu_gates_negative(self):
        p = MlpParams(weights=[np.eye(1)], biases=[np.zeros(1)], activation=Activation.RELU)
        y, _ = mlp_forward(p, np.array([-1.0]))
        assert y == 0.0

    def test_batch_shape(self):
        p = identity_params(2)
        y, _ = mlp_forward(p, np.arange(8.0).reshape(4, 2))
        assert y.shape == (4, 2)

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatch):
            mlp_forward(identity_params(3), np.zeros(4))
        with pytest.raises(DimensionMismatch):
            MlpParams(weights=[np.zeros((2, 3)), np.zeros((4, 1))],
                      biases=[np.zeros(3), np.zeros(1)], activation=Activation.RELU)


class TestBackward:
    def test_linear_layer_dx(self):
        rng = np.random.default_rng(0)
        w = rng.normal(size=(4, 3))
        p = MlpParams(weights=[w], biases=[np.zeros(3)], activation=Activation.IDENTITY)
        x = rng.normal(size=4)
        dy = rng.normal(size=3)
        _, tape = mlp_forward(p, x)
        dx, _ = mlp_backward(p, tape, dy)
        assert np.allclose(dx, w @ dy)

    def test_zero_dy_zero_grads(self):
        rng = np.random.default_rng(1)
        p = xavier_init([5, 4, 2], Activation.RELU, rng)
        _, tape = mlp_forward(p, rng.normal(size=5))
        dx, grads = mlp_backward(p, tape, np.zeros(2))
        assert np.all(dx == 0.0)
        assert all(np.all(dw == 0) and np.all(db == 0) for dw, db in grads)

    def test_matches_finite_differences_random_shapes(self):
        rng = np.random.default_rng(7)
        for dims in ([3, 5, 1], [6, 4, 4, 2], [2, 8, 1]):
            for activation in (Activation.RELU, Activation.IDENTITY):
                p = xavier_init(dims, activation, rng)
                x = rng.normal(size=dims[0])
                target = rng.normal(size=dims[-1])

                def loss():
                    y, _ = mlp_forward(p, x)
                    return float(((y - target) ** 2).sum())

                y, tape = mlp_forward(p, x)
                _, grads = mlp_backward(p, tape, 2.0 * (y - target))
                flat_params, flat_grads = [], []
                for (w, b), (dw, db) in zip(zip(p.weights, p.biases), grads):
                    flat_params += [w, b]
                    flat_grads += [dw, db]
                assert grad_check(loss, flat_params, flat_grads, eps=1e-5) < 1e-4

    def test_composition_equals_fused(self):
        rng = np.random.default_rng(3)
        w1, b1 = rng.normal(size=(4, 5)), rng.normal(size=5)
        w2, b2 = rng.normal(size=(5, 2)), rng.normal(size=2)
        two = MlpParams(weights=[w1, w2], biases=[b1, b2], activation=Activation.IDENTITY)
        fused = MlpParams(weights=[w1 @ w2], biases=[b1 @ w2 + b2],
                          activation=Activation.IDENTITY)
        x = rng.normal(size=4)
        dy = rng.normal(size=2)
        y2, tape2 = mlp_forward(two, x)
        yf, tapef = mlp_forward(fused, x)
        assert np.allclose(y2, yf)
        dx2, _ = mlp_backward(two, tape2, dy)
        dxf, _ = mlp_backward(fused, tapef, dy)
        assert np.allclose(dx2, dxf)

    def test_gradients_finite(self):
        rng = np.random.default_rng(5)
        p = xavier_init([10, 16, 16, 1], Activation.RELU, rng)
        x = rng.normal(size=(32, 10)) * 100.0
        y, tape = mlp_forward(p, x)
        dx, grads = mlp_backward(p, tape, np.ones_like(y))
        assert np.isfinite(dx).all()
        assert all(np.isfinite(dw).all() and np.isfinite(db).all() for dw, db in grads)


class TestGradCheck:
    def test_square_function(self):
        w = np.array([3.0])

        def loss():
            return float(w[0] ** 2)

        assert grad_check(loss, [w], [np.array([6.0])]) < 1e-8

    def test_constant_function(self):
        w = np.array([1.0, -2.0])
        assert grad_check(lambda: 5.0, [w], [np.zeros(2)]) == 0.0

    def test_flags_wrong_gradient(self):
        w = np.array([2.0])
        assert grad_check(lambda: float(w[0] ** 2), [w], [np.array([1.0])]) > 0.5


class TestXavierInit:
    def test_deterministic_under_seed(self):
        a = xavier_init([7, 5, 3], Activation.RELU, np.random.default_rng(11))
        b = xavier_init([7, 5, 3], Activation.RELU, np.random.default_rng(11))
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_zero_biases_and_bounds(self):
        p = xavier_init([9, 6, 2], Activation.RELU, np.random.default_rng(2))
        assert all(np.all(b == 0.0) for b in p.biases)
        for w in p.weights:
            bound = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
            assert np.abs(w).max() <= bound
