import math

import pytest
from hypothesis import given, strategies as st

from cavsim.dynamics import VehicleParams, VehicleState, advance, rear_end_gap_ok, safe_distance, step
from cavsim.exceptions import ConfigurationError, NumericError, UsageError


def fine_integration(p, v, u, T, n=200_000):
    # reference: semi-analytic sub-steps with explicit stop handling
    h = T / n
    for _ in range(n):
        if v <= 0 and u <= 0:
            return p, 0.0
        v_new = v + u * h
        if v_new < 0:
            tau = -v / u
            return p + v * tau + 0.5 * u * tau * tau, 0.0
        p += v * h + 0.5 * u * h * h
        v = v_new
    return p, v


def test_constant_speed_step():
    s = step(VehicleState(1, "r", 0.0, 7.0), 0.0, 0.02)
    assert s.p == pytest.approx(0.14)
    assert s.v == 7.0
    assert s.t == pytest.approx(0.02)


def test_start_from_rest():
    s = step(VehicleState(1, "r", 0.0, 0.0), 3.0, 1.0)
    assert (s.p, s.v) == (1.5, 3.0)


def test_stops_mid_step():
    p, v = advance(0.0, 1.0, -3.0, 1.0)
    assert v == 0.0
    assert p == pytest.approx(1 / 6, abs=1e-15)
    ref_p, ref_v = fine_integration(0.0, 1.0, -3.0, 1.0)
    assert abs(p - ref_p) < 1e-9 and ref_v == 0.0


def test_non_finite_rejected():
    with pytest.raises(NumericError):
        step(VehicleState(1, "r", 0.0, math.nan), 0.0, 0.02)
    with pytest.raises(NumericError):
        step(VehicleState(1, "r", 0.0, 1.0), math.inf, 0.02)


def test_non_positive_dt_rejected():
    with pytest.raises(UsageError):
        step(VehicleState(1, "r", 0.0, 1.0), 0.0, 0.0)


@pytest.mark.parametrize("v,gamma,h,expected", [(0, 1, 0.5, 1.0), (7, 1, 0.5, 4.5), (2, 0, 1, 2.0)])
def test_safe_distance(v, gamma, h, expected):
    assert safe_distance(v, VehicleParams(standstill=gamma, time_gap=h)) == pytest.approx(expected)


@pytest.mark.parametrize("gap,margin,ok", [(10.0, 5.5, True), (4.5, 0.0, True), (2.0, -2.5, False)])
def test_rear_end_margin(gap, margin, ok):
    params = VehicleParams(standstill=1.0, time_gap=0.5)
    follower = VehicleState(1, "r", 0.0, 7.0)
    leader = VehicleState(2, "r", gap, 7.0)
    assert rear_end_gap_ok(follower, leader, params) == (ok, pytest.approx(margin))


def test_rear_end_needs_same_lane():
    with pytest.raises(UsageError):
        rear_end_gap_ok(VehicleState(1, "a", 0, 1), VehicleState(2, "b", 5, 1), VehicleParams())


def test_params_validation():
    assert VehicleParams().violations() == []
    problems = VehicleParams(v_min=9.0).violations()
    assert problems and "v_min" in problems[0]
    with pytest.raises(ConfigurationError):
        VehicleParams(u_min=1.0).check()


speeds = st.floats(0.5, 20.0)
accels = st.floats(-3.0, 3.0)
steps = st.floats(1e-3, 0.1)


@given(v=speeds, u=accels, dt=steps)
def test_half_steps_compose(v, u, dt):
    if v + u * dt < 0:
        return  # clipping case covered separately
    p1, v1 = advance(0.0, v, u, dt)
    pa, va = advance(0.0, v, u, dt / 2)
    pb, vb = advance(pa, va, u, dt / 2)
    assert abs(p1 - pb) < 1e-12 and abs(v1 - vb) < 1e-12


@given(v=st.floats(0.0, 20.0), u=st.floats(-6.0, 3.0), dt=steps)
def test_never_reverses(v, u, dt):
    p, v_next = advance(0.0, v, u, dt)
    assert v_next >= 0.0
    assert p >= 0.0


@given(v1=st.floats(0, 30), v2=st.floats(0, 30), g=st.floats(0, 10), h=st.floats(0.01, 3))
def test_safe_distance_affine_monotone(v1, v2, g, h):
    params = VehicleParams(standstill=g, time_gap=h)
    lo, hi = sorted((v1, v2))
    assert safe_distance(lo, params) <= safe_distance(hi, params)
    mid = safe_distance((v1 + v2) / 2, params)
    assert mid == pytest.approx((safe_distance(v1, params) + safe_distance(v2, params)) / 2)
