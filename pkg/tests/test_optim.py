import numpy as np
import pytest

from ctxaug.numcore import Adam, AdamState, Tensor, TrainingError, adam_step, clip_global_norm, total


def test_first_adam_step_moves_each_coordinate_by_lr():
    # bias-corrected first step is lr * sign(g) up to eps
    p = np.array([1.0, -2.0, 3.0])
    g = np.array([0.5, -4.0, 1e-3])
    state = AdamState.for_params([p], lr=0.1)
    adam_step([p], [g], state)
    np.testing.assert_allclose(p, [0.9, -1.9, 2.9], atol=1e-6)
    assert state.t == 1


def test_adam_matches_closed_form_two_steps():
    p = np.array([0.0])
    state = AdamState.for_params([p], lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8)
    adam_step([p], [np.array([1.0])], state)
    adam_step([p], [np.array([3.0])], state)
    m = 0.9 * 0.1 + 0.1 * 3.0
    v = 0.999 * 0.001 + 0.001 * 9.0
    second = 0.01 * (m / (1 - 0.9**2)) / (np.sqrt(v / (1 - 0.999**2)) + 1e-8)
    np.testing.assert_allclose(p, [-(0.01 * 1.0 / (1.0 + 1e-8)) - second], rtol=1e-9)


def test_non_finite_gradient_aborts_without_mutation():
    p = np.array([1.0, 2.0])
    state = AdamState.for_params([p])
    with pytest.raises(TrainingError):
        adam_step([p], [np.array([np.nan, 1.0])], state)
    np.testing.assert_array_equal(p, [1.0, 2.0])
    assert state.t == 0


@pytest.mark.parametrize("max_norm, expected", [(10.0, 5.0), (1.0, 1.0)])
def test_clip_global_norm(max_norm, expected):
    grads, norm = clip_global_norm([np.array([3.0]), np.array([4.0])], max_norm)
    assert norm == pytest.approx(5.0)
    assert np.sqrt(sum(float(g @ g) for g in grads)) == pytest.approx(expected)


def test_adam_minimizes_a_quadratic():
    x = Tensor(np.array([3.0, -2.0]), requires_grad=True)
    opt = Adam([x], lr=0.1)
    for _ in range(300):
        total(x * x).backward()
        opt.step()
    assert np.abs(x.data).max() < 1e-2
