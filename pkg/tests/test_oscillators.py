import math

import pytest
from hypothesis import given, strategies as st

from gesture_sindy.errors import InvalidStateError
from gesture_sindy.oscillators import (
    MODEL_EVALS,
    MODEL_FORMS,
    ActivationSchedule,
    OscillatorParams,
    activation,
    actual_target,
    critical_damping,
    eval_cubic,
    eval_cubic_velocity,
    eval_linear,
    eval_linear_reformulated,
    virtual_target,
)


def test_params_validation():
    OscillatorParams(k=1.0, b=-2.0)  # negative damping is legal (overshoot)
    with pytest.raises(ValueError):
        OscillatorParams(k=0.0, b=1.0)
    with pytest.raises(ValueError):
        OscillatorParams(k=-5.0, b=1.0)
    with pytest.raises(ValueError):
        OscillatorParams(k=1.0, b=1.0, d=-0.1)
    with pytest.raises(ValueError):
        OscillatorParams(k=float("nan"), b=1.0)
    with pytest.raises(ValueError):
        OscillatorParams(k=1.0, b=float("inf"))


def test_eval_linear_restoring_force():
    p = OscillatorParams(k=1600.0, b=80.0)
    assert eval_linear((1.0, 0.0), p) == (0.0, -1600.0)
    dx, dv = eval_linear((0.0, 2.0), p)
    assert dx == 2.0
    assert dv == -160.0
    # equilibrium at the target
    assert eval_linear((0.5, 0.0), OscillatorParams(k=10.0, b=1.0, T=0.5)) == (0.0, 0.0)


def test_eval_cubic_softens_spring():
    # cubic term cancels most of the linear pull at unit displacement
    p = OscillatorParams(k=2000.0, b=2 * math.sqrt(2000.0), d=1900.0, T=0.0)
    dx, dv = eval_cubic((1.0, 0.0), p)
    assert dx == 0.0
    assert dv == pytest.approx(-100.0)
    # reduces to the linear model when d = 0
    p0 = OscillatorParams(k=123.0, b=4.0, T=0.3)
    assert eval_cubic((0.7, -1.1), p0) == eval_linear((0.7, -1.1), p0)


def test_eval_cubic_velocity_damping():
    p = OscillatorParams(k=100.0, b=2.0)
    dx, dv = eval_cubic_velocity((0.0, 0.5), p)
    assert dv == pytest.approx(-2.0 * 0.125)
    # at v = 1 cubic and linear damping agree
    pl = OscillatorParams(k=100.0, b=2.0)
    assert eval_cubic_velocity((0.2, 1.0), pl)[1] == eval_linear((0.2, 1.0), pl)[1]


def test_eval_linear_reformulated_midpoint_equilibrium():
    # force vanishes at the midpoint of x0 and T
    p = OscillatorParams(k=100.0, b=0.0, T=3.0, x0=1.0)
    mid = 0.5 * (3.0 + 1.0)
    assert eval_linear_reformulated((mid, 0.0), p) == (0.0, 0.0)
    assert eval_linear_reformulated((1.0, 0.0), p)[1] == pytest.approx(100.0)


def test_eval_rejects_non_finite_state():
    p = OscillatorParams(k=1.0, b=1.0)
    for fn in (eval_linear, eval_cubic, eval_cubic_velocity, eval_linear_reformulated):
        with pytest.raises(InvalidStateError):
            fn((float("nan"), 0.0), p)
        with pytest.raises(InvalidStateError):
            fn((0.0, float("inf")), p)


def test_model_registries_agree():
    assert set(MODEL_FORMS) == set(MODEL_EVALS)
    assert MODEL_EVALS["cubic"] is eval_cubic


def test_critical_damping_values():
    assert critical_damping(4.0) == 4.0
    assert critical_damping(100.0) == 20.0
    assert critical_damping(2000.0) == pytest.approx(2.0 * math.sqrt(2000.0))
    with pytest.raises(ValueError):
        critical_damping(-1.0)


def test_virtual_target_worked_example():
    # onset 14.65, empirical target 19.75 -> virtual target at the midpoint
    tv = virtual_target(14.65, 19.75)
    assert tv == pytest.approx(17.20)
    assert actual_target(tv, 14.65) == pytest.approx(19.75)


@given(
    st.floats(-100, 100, allow_nan=False),
    st.floats(-100, 100, allow_nan=False),
)
def test_virtual_actual_round_trip(x0, T):
    recovered = actual_target(virtual_target(x0, T), x0)
    assert recovered == pytest.approx(T, abs=1e-10)


def test_activation_none_is_always_on():
    assert activation(None, -5.0) == 1.0
    assert activation(None, 123.0) == 1.0


def test_step_activation_closed_interval():
    sched = ActivationSchedule(kind="step", ta=0.1, tb=0.3)
    assert activation(sched, 0.1) == 1.0
    assert activation(sched, 0.3) == 1.0
    assert activation(sched, 0.2) == 1.0
    assert activation(sched, 0.0999) == 0.0
    assert activation(sched, 0.3001) == 0.0


def test_ramped_activation_profile():
    sched = ActivationSchedule(kind="ramped", ta=0.0, tb=0.1, tc=0.3, td=0.5)
    assert activation(sched, -0.01) == 0.0
    assert activation(sched, 0.0) == 0.0
    assert activation(sched, 0.05) == pytest.approx(math.sin(math.pi / 4))
    assert activation(sched, 0.1) == 1.0
    assert activation(sched, 0.2) == 1.0
    assert activation(sched, 0.4) == pytest.approx(math.sin(math.pi / 4))
    assert activation(sched, 0.5) == 0.0
    assert activation(sched, 0.6) == 0.0


def test_ramped_activation_is_continuous_at_breakpoints():
    sched = ActivationSchedule(kind="ramped", ta=0.0, tb=0.1, tc=0.3, td=0.5)
    eps = 1e-9
    for knot in (0.0, 0.1, 0.3, 0.5):
        lo = activation(sched, knot - eps)
        hi = activation(sched, knot + eps)
        assert abs(hi - lo) < 1e-7


def test_schedule_validation():
    with pytest.raises(ValueError):
        ActivationSchedule(kind="step", ta=0.3, tb=0.1)
    with pytest.raises(ValueError):
        ActivationSchedule(kind="ramped", ta=0.0, tb=0.2, tc=0.1, td=0.5)
    with pytest.raises(ValueError):
        ActivationSchedule(kind="ramped", ta=0.0, tb=0.1, tc=0.5, td=0.5)
    with pytest.raises(ValueError):
        ActivationSchedule(kind="sigmoid", ta=0.0, tb=0.1)
    # hold phase may be empty (tb == tc)
    ActivationSchedule(kind="ramped", ta=0.0, tb=0.2, tc=0.2, td=0.4)
