import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chrono_rnn.exceptions import ConfigurationError, NumericalError
from chrono_rnn.optim import LrSchedule, RMSProp, rmsprop_step, schedule_update


def test_zero_gradient_is_fixed_point():
    opt = RMSProp()
    opt.s["w"] = np.full(3, 0.5)
    p = {"w": np.array([1.0, -2.0, 3.0])}
    before = p["w"].copy()
    for _ in range(5):
        opt.step(p, {"w": np.zeros(3)})
    assert np.array_equal(p["w"], before)
    np.testing.assert_allclose(opt.s["w"], 0.5 * 0.9 ** 5, rtol=1e-15)


def test_first_step_hand_arithmetic():
    opt = RMSProp(lr=1e-3, rho=0.9, eps=1e-8)
    p = {"w": np.array([0.0])}
    opt.step(p, {"w": np.array([1.0])})
    assert opt.s["w"][0] == pytest.approx(0.1, rel=1e-15)
    assert p["w"][0] == pytest.approx(-1e-3 / math.sqrt(0.1 + 1e-8), rel=1e-14)
    assert p["w"][0] == pytest.approx(-3.16228e-3, abs=1e-8)


@pytest.mark.parametrize("c", [1e-3, 0.5, 1.0, 7.0, 1e4])
def test_first_step_scaling(c):
    def delta(g):
        opt = RMSProp(lr=1e-3, rho=0.9, eps=1e-8)
        p = {"w": np.array([0.0])}
        opt.step(p, {"w": np.array([g])})
        return p["w"][0]

    ratio = delta(c) / delta(1.0)
    expected = c / math.sqrt(c * c * 0.1 + 1e-8) * math.sqrt(0.1 + 1e-8)
    assert ratio == pytest.approx(expected, rel=1e-12)
    if c >= 1:
        assert ratio == pytest.approx(1.0, rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (4, 5), elements=st.floats(-1e3, 1e3)))
def test_second_moment_nonnegative(g):
    opt = RMSProp()
    p = {"w": np.zeros((4, 5))}
    for k in range(3):
        opt.step(p, {"w": g * (k - 1)})
        assert np.all(opt.s["w"] >= 0)


def test_nonfinite_gradient_aborts_without_update():
    opt = RMSProp()
    p = {"a": np.ones(2), "b": np.ones(2)}
    with pytest.raises(NumericalError) as err:
        opt.step(p, {"a": np.ones(2), "b": np.array([1.0, np.nan])}, iteration=17)
    assert err.value.iteration == 17
    assert np.array_equal(p["a"], np.ones(2)) and not opt.s


def test_functional_form_leaves_input():
    p = {"w": np.ones(2)}
    new, state = rmsprop_step(RMSProp(), p, {"w": np.ones(2)})
    assert np.array_equal(p["w"], np.ones(2)) and not np.array_equal(new["w"], p["w"])


@pytest.mark.parametrize("kw", [dict(lr=0), dict(rho=1.0), dict(rho=-0.1), dict(eps=0)])
def test_bad_hyperparameters(kw):
    with pytest.raises(ConfigurationError):
        RMSProp(**kw)


def test_schedule_strictly_decreasing_never_halves():
    opt, s = RMSProp(), LrSchedule(patience=3)
    for k in range(50):
        s.update(1.0 - k * 0.01, opt)
    assert opt.lr == 1e-3 and s.halvings == 0


def test_schedule_constant_for_patience():
    opt, s = RMSProp(), LrSchedule(patience=100)
    s.update(1.0, opt)  # first evaluation sets the best
    for _ in range(99):
        s.update(1.0, opt)
    assert opt.lr == 1e-3
    s.update(1.0, opt)
    assert opt.lr == 5e-4


def test_schedule_trace():
    opt, s = RMSProp(), LrSchedule(patience=100)
    losses = [1.0] + [1.0] * 100 + [0.9] + [1.0] * 100
    halved_at = []
    for k, loss in enumerate(losses, 1):
        schedule_update(s, loss, opt)
        if s.halvings > len(halved_at):
            halved_at.append(k)
    assert halved_at == [101, 202]
    assert opt.lr == 1e-3 / 4


def test_schedule_power_of_two_exact():
    opt, s = RMSProp(lr=1e-3), LrSchedule(patience=1)
    s.update(0.0, opt)
    for n in range(1, 30):
        s.update(1.0, opt)
        assert opt.lr == 1e-3 * 2.0 ** -n
        assert s.since_best <= s.patience
