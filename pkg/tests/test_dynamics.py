import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tfta.dynamics import (
    AircraftState,
    KinematicLimits,
    climb_rate_law,
    horizontal_step,
    integrate_vertical,
    kinematic_correct,
    propagate,
    vertical_derivatives,
)
from tfta.errors import ConfigError, LimitsExceededError, SingularityError

LIM = KinematicLimits()
V = 200.0
R_MIN = V * V / (9.81 * math.tan(math.radians(45.0)))


def test_limit_defaults():
    assert LIM.gamma_max == pytest.approx(math.radians(25))
    assert LIM.min_turn_radius(V) == pytest.approx(R_MIN)
    assert LIM.max_climb_rate(V) == pytest.approx(9.81 * 2 / 200)
    with pytest.raises(ConfigError):
        KinematicLimits(load_factor_max=1.0)


def test_straight_step():
    assert horizontal_step(5.0, 7.0, 0.0, 200.0, 0.0, 1.0) == (205.0, 7.0, 0.0)


def test_quarter_circle():
    R = 5000.0
    dt = (math.pi / 2) * R / V
    x, y, phi = horizontal_step(0.0, 0.0, 0.0, V, 1.0 / R, dt)
    assert (x, y, phi) == pytest.approx((R, R, math.pi / 2), abs=1e-9)


def test_curvature_precondition():
    with pytest.raises(LimitsExceededError):
        horizontal_step(0, 0, 0, V, 2.0 / R_MIN, 1.0, LIM)
    with pytest.raises(LimitsExceededError):
        horizontal_step(0, 0, 0, V, 0.0, 0.0)


@settings(max_examples=100, deadline=None)
@given(
    kappa=st.floats(-1.0 / R_MIN, 1.0 / R_MIN),
    phi=st.floats(-math.pi, math.pi),
    dt=st.floats(0.1, 30.0),
)
def test_arc_properties(kappa, phi, dt):
    x, y, phi2 = horizontal_step(0.0, 0.0, phi, V, kappa, dt)
    s = V * dt
    assert phi2 - phi == pytest.approx(kappa * s, abs=1e-12)
    chord = math.hypot(x, y)
    if abs(kappa) > 1e-9:
        R = 1.0 / abs(kappa)
        dphi = abs(kappa) * s
        assert chord == pytest.approx(2 * R * math.sin(dphi / 2), rel=1e-9, abs=1e-6)
        # numerically integrated arc
        n = 2000
        hs = phi + kappa * np.linspace(0, s, n + 1)
        xi = np.trapezoid(np.cos(hs), dx=s / n)
        yi = np.trapezoid(np.sin(hs), dx=s / n)
        assert x == pytest.approx(xi, abs=1e-3)
        assert y == pytest.approx(yi, abs=1e-3)
    else:
        assert chord == pytest.approx(s, rel=1e-9)
    # mirror image across the initial heading line
    xm, ym, _ = horizontal_step(0.0, 0.0, phi, V, -kappa, dt)
    hx, hy = math.cos(phi), math.sin(phi)
    along = x * hx + y * hy
    across = -x * hy + y * hx
    assert xm * hx + ym * hy == pytest.approx(along, abs=1e-6)
    assert -xm * hy + ym * hx == pytest.approx(-across, abs=1e-6)


def test_derivative_examples():
    d = vertical_derivatives((0, 0, 0, 200.0, 0.0, 0.0), 0.0, 0.0, 1.0, 9.81)
    np.testing.assert_allclose(d, [200, 0, 0, 0, 0, 0], atol=1e-12)
    d = vertical_derivatives((0, 0, 0, 200.0, 0.0, 0.0), 0.0, 0.0, 1.2, 9.81)
    assert d[4] == pytest.approx(0.00981)
    with pytest.raises(SingularityError):
        vertical_derivatives((0, 0, 0, 200.0, math.pi / 2, 0.0), 0, 0, 1, 9.81)


def test_trim_flight():
    s = AircraftState((0, 0, 1000), V, 0.0, 0.3)
    out = integrate_vertical(s, (0.0, 0.0, 1.0), 10.0, LIM)
    np.testing.assert_allclose(out.position, [2000 * math.cos(0.3), 2000 * math.sin(0.3), 1000], atol=1e-9)
    assert out.speed == pytest.approx(V, abs=1e-9)
    assert abs(out.climb_angle) < 1e-9
    assert out.track_heading == pytest.approx(0.3, abs=1e-9)


def test_rk4_step_halving():
    s = AircraftState((0, 0, 1000), V, 0.1, 0.3)
    law = climb_rate_law(0.02, 9.81)
    a = integrate_vertical(s, law, 5.0, LIM, substeps=4)
    b = integrate_vertical(s, law, 5.0, LIM, substeps=8)
    assert np.linalg.norm(a.position - b.position) < 1e-6


def test_commanded_climb_rate():
    s = AircraftState((0, 0, 0), V, 0.0, 0.0)
    out = integrate_vertical(s, climb_rate_law(0.05, 9.81), 4.0, LIM)
    assert (out.climb_angle - 0.0) / 4.0 == pytest.approx(0.05, abs=1e-4)


def test_speed_conserved_with_balanced_thrust():
    s = AircraftState((0, 0, 0), V, -0.2, 1.0)
    out = integrate_vertical(s, climb_rate_law(0.03, 9.81), 6.0, LIM)
    assert out.speed == pytest.approx(V, abs=1e-12)


def test_load_factor_clamped():
    s = AircraftState((0, 0, 0), V, 0.0, 0.0)
    a = integrate_vertical(s, (0.0, 0.0, 10.0), 1.0, LIM)
    b = integrate_vertical(s, (0.0, 0.0, LIM.load_factor_max), 1.0, LIM)
    assert a.climb_angle == b.climb_angle


def _state(gamma=0.0, heading=0.0):
    return AircraftState(np.array([0.0, 0.0, 1000.0]), V, gamma, heading)


def test_correct_inactive_clamp():
    s = _state(0.05)
    gamma_t = 0.08
    expected, _ = propagate(s, 1e-5, gamma_t, LIM, 1.0)
    # aim at a point on the same arc a long way ahead
    target = np.array([*horizontal_step(0, 0, 0, V, 1e-5, 1.0)[:2], 0.0])
    target[2] = 1000.0 + math.hypot(*target[:2]) * math.tan(gamma_t)
    p, new, corr = kinematic_correct(s.position, s.position, target, s, LIM, 1.0)
    assert corr.curvature == pytest.approx(corr.demanded_turn)
    assert corr.climb_end == pytest.approx(corr.demanded_climb)
    np.testing.assert_allclose(p, expected.position, atol=1e-3)


def test_correct_vertical_saturation():
    s = _state(math.radians(24.0))
    target = s.position + np.array([0.0, 0.0, 200.0])
    _, new, corr = kinematic_correct(s.position, s.position, target, s, LIM, 1.0)
    assert corr.demanded_climb == pytest.approx(math.pi / 2)
    assert new.climb_angle == LIM.gamma_max


def test_correct_turn_saturation():
    s = _state()
    target = np.array([10.0, 150.0, 1000.0])
    p, new, corr = kinematic_correct(s.position, s.position, target, s, LIM, 1.0)
    assert abs(corr.demanded_turn) > 1.0 / R_MIN
    assert 1.0 / abs(corr.curvature) == pytest.approx(R_MIN, abs=1e-6)
    # realized radius from the output arc
    dphi = new.track_heading
    chord = math.hypot(*p[:2])
    assert chord / (2 * math.sin(dphi / 2)) == pytest.approx(R_MIN, rel=1e-9)


def test_correct_degenerate_fallback():
    s = _state(0.0, 0.5)
    p, new, corr = kinematic_correct(s.position, s.position, s.position, s, LIM, 1.0)
    assert corr.fallback
    assert new.track_heading == pytest.approx(0.5)


@settings(max_examples=200, deadline=None)
@given(
    gamma=st.floats(-0.43, 0.43),
    heading=st.floats(-math.pi, math.pi),
    target=st.tuples(*[st.floats(-600.0, 600.0)] * 3),
)
def test_correct_invariants(gamma, heading, target):
    s = _state(gamma, heading)
    p, new, corr = kinematic_correct(s.position, s.position, s.position + np.asarray(target), s, LIM, 1.0)
    assert abs(new.climb_angle) <= LIM.gamma_max
    assert abs(new.roll) <= LIM.roll_max + 1e-12
    assert abs(corr.curvature) <= 1.0 / R_MIN * (1 + 1e-12)
    assert abs(new.climb_angle - gamma) <= LIM.max_climb_rate(V) + 1e-12
    assert np.linalg.norm(p - s.position) <= V * (1 + 1e-9)
