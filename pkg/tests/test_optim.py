"""Closed-form and determinism checks for the two optimizers."""

import numpy as np
import pytest

from nrtw.autodiff import ParamSet, Tensor
from nrtw.errors import ShapeMismatchError
from nrtw.optim import (
    OptimizerState,
    adam_state,
    adam_step,
    sgd_momentum_state,
    sgd_momentum_step,
)


def scalar_params(value=0.0):
    return ParamSet([("w", Tensor(np.array([value], dtype=np.float32)))])


def test_state_kind_validation():
    with pytest.raises(ValueError):
        OptimizerState(kind="rmsprop", learning_rate=0.1)
    with pytest.raises(ValueError):
        OptimizerState(kind="adam", learning_rate=0.1, step_count=-1)


def test_adam_zero_gradient_is_a_fixed_point():
    params = scalar_params(3.0)
    state = adam_state(params, learning_rate=0.1)
    adam_step(params, {"w": np.zeros(1, dtype=np.float32)}, state)
    assert params["w"].data[0] == 3.0
    assert np.all(state.slots["w"]["m"] == 0.0)
    assert np.all(state.slots["w"]["v"] == 0.0)
    assert state.step_count == 1


def test_adam_first_step_magnitude():
    # bias correction cancels at step 1: |update| = lr / (1 + eps)
    params = scalar_params(0.0)
    state = adam_state(params, learning_rate=0.1)
    adam_step(params, {"w": np.ones(1, dtype=np.float32)}, state)
    assert params["w"].data[0] == pytest.approx(-0.1 / (1 + 1e-8), rel=1e-6)


def test_adam_determinism():
    def run():
        params = scalar_params(1.0)
        state = adam_state(params, learning_rate=0.05)
        rng = np.random.default_rng(9)
        for _ in range(20):
            g = rng.standard_normal(1).astype(np.float32)
            adam_step(params, {"w": g}, state)
        return params["w"].data.copy(), state.slots["w"]["m"].copy()

    (p1, m1), (p2, m2) = run(), run()
    assert np.array_equal(p1, p2)
    assert np.array_equal(m1, m2)


def test_sgd_mu_zero_is_plain_descent():
    params = scalar_params(1.0)
    state = sgd_momentum_state(params, learning_rate=0.5, momentum=0.0)
    sgd_momentum_step(params, {"w": np.array([2.0], dtype=np.float32)}, state)
    assert params["w"].data[0] == pytest.approx(1.0 - 0.5 * 2.0)


def test_sgd_two_step_recursion():
    # v1=1, p1=-0.01; v2=1.9, p2=-0.029
    params = scalar_params(0.0)
    state = sgd_momentum_state(params, learning_rate=0.01, momentum=0.9)
    g = np.ones(1, dtype=np.float32)
    sgd_momentum_step(params, {"w": g}, state)
    assert params["w"].data[0] == pytest.approx(-0.01)
    sgd_momentum_step(params, {"w": g}, state)
    assert params["w"].data[0] == pytest.approx(-0.029)


def test_sgd_zero_gradient_zero_velocity_no_change():
    params = scalar_params(5.0)
    state = sgd_momentum_state(params, learning_rate=0.1, momentum=0.9)
    sgd_momentum_step(params, {"w": np.zeros(1, dtype=np.float32)}, state)
    assert params["w"].data[0] == 5.0


def test_gradient_shape_mismatch_rejected():
    params = scalar_params()
    state = sgd_momentum_state(params, learning_rate=0.1)
    with pytest.raises(ShapeMismatchError):
        sgd_momentum_step(params, {"w": np.zeros(3, dtype=np.float32)}, state)
    with pytest.raises(ShapeMismatchError):
        sgd_momentum_step(params, {}, state)


def test_optimizer_kind_mismatch_rejected():
    params = scalar_params()
    adam = adam_state(params, 0.1)
    sgd = sgd_momentum_state(params, 0.1)
    g = {"w": np.zeros(1, dtype=np.float32)}
    with pytest.raises(ValueError):
        adam_step(params, g, sgd)
    with pytest.raises(ValueError):
        sgd_momentum_step(params, g, adam)
