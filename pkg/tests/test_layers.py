"""Worked numeric examples for the basic layers and the optimizer."""
import math

import numpy as np
import pytest

from ctxaug.numcore import (
    AdamState,
    LSTMParams,
    Tensor,
    activation,
    adam_step,
    affine,
    cross_entropy,
    dropout,
    grad_check,
    lstm_step,
    softmax,
    total,
)


@pytest.mark.parametrize(
    "x, W, b, y",
    [
        ([[1, 0]], [[2, 0], [0, 3]], [0, 0], [[2, 0]]),
        ([[1, 1]], [[1, 0], [0, 1]], [5, 5], [[6, 6]]),
    ],
)
def test_affine_examples(x, W, b, y):
    out = affine(Tensor(np.array(x, float)), Tensor(np.array(W, float)), Tensor(np.array(b, float)))
    np.testing.assert_array_equal(out.data, y)


def test_affine_bias_gradient_is_ones():
    b = Tensor(np.zeros(3), requires_grad=True)
    total(affine(Tensor(np.ones((4, 2))), Tensor(np.ones((2, 3))), b)).backward()
    np.testing.assert_array_equal(b.grad, np.full(3, 4.0))


@pytest.mark.parametrize("kind, x, y", [("relu", -1.0, 0.0), ("relu", 2.0, 2.0), ("sigmoid", 0.0, 0.5), ("tanh", 0.0, 0.0)])
def test_activation_values(kind, x, y):
    assert float(activation(Tensor(np.array([x])), kind).data[0]) == pytest.approx(y)


def test_unknown_activation():
    with pytest.raises(ValueError):
        activation(Tensor(np.zeros(1)), "gelu")


@pytest.mark.parametrize(
    "z, p",
    [([0.0, 0.0], [0.5, 0.5]), ([1000.0, 0.0], [1.0, 0.0]), ([math.log(2), 0.0], [2 / 3, 1 / 3])],
)
def test_softmax_examples(z, p):
    out = softmax(Tensor(np.array([z]))).data[0]
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, p, atol=1e-12)


def test_cross_entropy_closed_forms():
    assert float(cross_entropy(Tensor(np.zeros((3, 4))), [0, 1, 3]).data) == pytest.approx(math.log(4))
    confident = np.array([[50.0, 0.0, 0.0]])
    assert float(cross_entropy(Tensor(confident), [0]).data) == pytest.approx(0.0, abs=1e-12)


def _lstm_params(rng, d, h, scale=0.5):
    return LSTMParams(*(Tensor(rng.normal(0, scale, s), requires_grad=True) for s in ((d, 4 * h), (h, 4 * h), (4 * h,))))


def test_lstm_zero_fixed_point():
    p = LSTMParams(Tensor(np.zeros((3, 8))), Tensor(np.zeros((2, 8))), Tensor(np.zeros(8)))
    h, c = lstm_step(np.zeros(3), (np.zeros(2), np.zeros(2)), p)
    np.testing.assert_array_equal(h.data, 0)
    np.testing.assert_array_equal(c.data, 0)


def test_lstm_hidden_is_bounded():
    rng = np.random.default_rng(0)
    p = _lstm_params(rng, 3, 4, scale=5.0)
    h, c = lstm_step(rng.normal(0, 10, 3), (rng.normal(size=4), rng.normal(0, 10, 4)), p)
    assert np.all(np.abs(h.data) <= 1)


def test_three_step_bptt_gradient():
    rng = np.random.default_rng(2)
    p = _lstm_params(rng, 3, 4)
    xs = [Tensor(rng.normal(size=3)) for _ in range(3)]
    w = rng.normal(size=4)

    def f():
        state = (Tensor(np.zeros(4)), Tensor(np.zeros(4)))
        for x in xs:
            state = lstm_step(x, state, p)
        return total(state[0] * w)

    assert grad_check(f, list(p)) < 1e-4


def test_softmax_cross_entropy_composite_gradient():
    rng = np.random.default_rng(3)
    x = Tensor(rng.normal(size=(5, 4)))
    W, b = (Tensor(rng.normal(0, 0.5, s), requires_grad=True) for s in ((4, 3), (3,)))
    t = rng.integers(0, 3, 5)
    assert grad_check(lambda: cross_entropy(affine(x, W, b), t), [W, b]) < 1e-4


def test_grad_check_on_square():
    x = Tensor(np.array([3.0]), requires_grad=True)
    assert grad_check(lambda: total(x * x), [x]) < 1e-10
    total(x * x).backward()
    assert x.grad[0] == pytest.approx(6.0)


def test_grad_check_requires_float64():
    x = Tensor(np.zeros(2, np.float32), requires_grad=True)
    with pytest.raises(ValueError):
        grad_check(lambda: total(x), [x])


def test_dropout_unit_mean_within_three_sigma():
    rng = np.random.default_rng(0)
    rate, n = 0.3, 10_000
    y = dropout(Tensor(np.ones(n)), rate, rng).data
    sigma = math.sqrt(rate / (1 - rate) / n)
    assert abs(y.mean() - 1.0) < 3 * sigma
    assert dropout(Tensor(np.ones(3)), 0.0, rng).data.tolist() == [1, 1, 1]


def test_adam_hand_example():
    theta = np.array([0.0])
    adam_step([theta], [np.array([1.0])], AdamState.for_params([theta]))
    assert theta[0] == pytest.approx(-0.001, rel=1e-6)


def test_adam_zero_gradient_leaves_parameters():
    theta = np.array([0.7, -0.2])
    adam_step([theta], [np.zeros(2)], AdamState.for_params([theta]))
    np.testing.assert_array_equal(theta, [0.7, -0.2])


def test_adam_is_deterministic():
    outs = []
    for _ in range(2):
        theta = np.array([0.5, 1.5])
        state = AdamState.for_params([theta], lr=0.01)
        for g in ([0.1, -0.3], [0.2, 0.4]):
            adam_step([theta], [np.array(g)], state)
        outs.append(theta.tobytes())
    assert outs[0] == outs[1]
