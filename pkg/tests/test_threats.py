import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tfta.errors import CollisionError, ConfigError, DegenerateGeometryError
from tfta.threats import (
    MOTION_KINDS,
    TANGENT_CLAMP,
    MotionPattern,
    Threat,
    nearest_surface_distance,
    observe,
    position_at,
    project_to_surface,
    threat_normal,
    threat_value,
)

UNIT = Threat((0, 0, 0), (1, 1, 1))


def _fd_normal(th, t, p, h):
    g = np.zeros(3)
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        g[i] = (threat_value(th, t, p + e) - threat_value(th, t, p - e)) / (2 * h)
    return g


def test_value_examples():
    assert threat_value(UNIT, 0.0, (1, 0, 0)) == 1.0
    assert threat_value(UNIT, 0.0, (2, 0, 0)) == 4.0
    assert threat_value(Threat((0, 0, 0), (2, 1, 1)), 0.0, (2, 1, 0)) == 2.0


def test_normal_examples():
    np.testing.assert_array_equal(threat_normal(UNIT, 0.0, (1, 0, 0)), [2, 0, 0])
    np.testing.assert_array_equal(threat_normal(UNIT, 0.0, (0, 2, 0)), [0, 4, 0])
    with pytest.raises(DegenerateGeometryError):
        threat_normal(UNIT, 0.0, (0, 0, 0))


def test_normal_matches_finite_differences():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        th = Threat(
            rng.uniform(-2000, 2000, 3),
            rng.uniform(200, 2000, 3),
            rng.integers(1, 4, 3),
        )
        c = np.asarray(th.center0)
        p = c + rng.uniform(-2.0, 2.0, 3) * np.asarray(th.semi_axes)
        g = threat_normal(th, 0.0, p)
        fd = _fd_normal(th, 0.0, p, 1e-3)
        worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(g))
    assert worst < 1e-6


def test_normal_points_outward():
    rng = np.random.default_rng(1)
    for _ in range(200):
        th = Threat((0, 0, 0), rng.uniform(1, 5, 3), rng.integers(1, 4, 3))
        p = rng.normal(size=3) * 4
        assert np.dot(threat_normal(th, 0.0, p), p) > 0


def test_static_motion():
    c, v = position_at(MotionPattern(), (1, 2, 3), 17.0)
    np.testing.assert_array_equal(c, [1, 2, 3])
    np.testing.assert_array_equal(v, [0, 0, 0])


def test_circle_at_zero():
    c, v = position_at(MotionPattern("circle", 100.0, 0.1), (0, 0, 50), 0.0)
    np.testing.assert_allclose(c, [100, 0, 50])
    np.testing.assert_allclose(v, [0, 10, 0])


def test_sine_peak():
    m = MotionPattern("sine", 300.0, 0.2, (0, 1, 0), phase=0.3)
    t = (math.pi / 2 - 0.3) / 0.2
    c, v = position_at(m, (0, 0, 0), t)
    np.testing.assert_allclose(c, [0, 300, 0], atol=1e-9)
    np.testing.assert_allclose(v, 0, atol=1e-9)


def test_line_motion():
    m = MotionPattern("line", 10.0, 0.5, (0.6, 0.8, 0.0))
    c, v = position_at(m, (1, 1, 1), 4.0)
    np.testing.assert_allclose(c, [1 + 12, 1 + 16, 1])
    np.testing.assert_allclose(v, [3, 4, 0])


def test_tangent_clamped():
    m = MotionPattern("tangent", 50.0, 1.0)
    c, v = position_at(m, (0, 0, 0), math.pi / 2 - 1e-4)
    assert c[0] == pytest.approx(TANGENT_CLAMP * 50.0)
    np.testing.assert_array_equal(v, 0)


@pytest.mark.parametrize("kind", MOTION_KINDS)
def test_velocity_is_derivative(kind):
    m = MotionPattern(kind, 120.0, 0.07, (0.0, 0.6, 0.8), phase=0.4)
    h = 1e-5
    for t in np.linspace(0.0, 40.0, 41):
        c_plus, _ = position_at(m, (5, 6, 7), t + h)
        c_minus, _ = position_at(m, (5, 6, 7), t - h)
        _, v = position_at(m, (5, 6, 7), t)
        fd = (c_plus - c_minus) / (2 * h)
        assert np.linalg.norm(fd - v) <= 1e-6 * max(1.0, np.linalg.norm(v))


def test_moving_center_used():
    th = Threat((0, 0, 0), (1, 1, 1), motion=MotionPattern("line", 1.0, 1.0))
    assert threat_value(th, 3.0, (3, 0, 0)) == 0.0


def test_surface_distance_examples():
    assert nearest_surface_distance(UNIT, 0.0, (3, 0, 0)) == pytest.approx(2.0, abs=1e-6)
    big = Threat((0, 0, 0), (5, 5, 5))
    p = np.array([3.0, 4.0, 12.0]) * (12 / 13)
    assert nearest_surface_distance(big, 0.0, p) == pytest.approx(7.0, abs=1e-6)
    ell = Threat((0, 0, 0), (2, 1, 1))
    assert nearest_surface_distance(ell, 0.0, (4, 0, 0)) == pytest.approx(2.0, abs=1e-6)
    with pytest.raises(CollisionError):
        nearest_surface_distance(UNIT, 0.0, (0.5, 0, 0))


@settings(max_examples=200, deadline=None)
@given(
    axes=st.tuples(*[st.floats(10.0, 3000.0)] * 3),
    exps=st.tuples(*[st.integers(1, 3)] * 3),
    direction=st.tuples(*[st.floats(-1.0, 1.0)] * 3).filter(lambda d: np.linalg.norm(d) > 1e-3),
    scale=st.floats(1.001, 20.0),
)
def test_projection_properties(axes, exps, direction, scale):
    th = Threat((100, -50, 300), axes, exps)
    c = np.asarray(th.center0)
    d = np.asarray(direction) / np.linalg.norm(direction)
    # place p outside by scaling a surface-crossing ray
    p0 = project_to_surface(th, 0.0, c + d * 1e5)
    p = c + scale * (p0 - c)
    q = project_to_surface(th, 0.0, p)
    assert threat_value(th, 0.0, q) == pytest.approx(1.0, abs=1e-5)
    assert nearest_surface_distance(th, 0.0, p) <= np.linalg.norm(p - c) + 1e-9


def test_observe_range_and_exact():
    far = Threat((15_000 + 1, 0, 0), (1, 1, 1))
    near = Threat((5000, 0, 0), (1, 1, 1))
    rng = np.random.default_rng(0)
    obs = observe([far, near], 0.0, (0, 0, 0), rng, dropout=0.0)
    assert not obs[0].visible
    assert obs[0].rel_position is None and obs[0].distance is None
    assert obs[1].visible
    np.testing.assert_allclose(obs[1].rel_position, [4999, 0, 0], atol=1e-6)
    assert obs[1].distance == pytest.approx(4999.0, abs=1e-6)


def test_observe_dropout_rate():
    near = Threat((5000, 0, 0), (1, 1, 1))
    rng = np.random.default_rng(42)
    dropped = sum(not observe([near], 0.0, (0, 0, 0), rng)[0].visible for _ in range(10_000))
    assert 0.037 <= dropped / 10_000 <= 0.063


def test_observe_deterministic():
    ths = [Threat((i * 1000.0, 0, 0), (100, 100, 100)) for i in range(1, 6)]
    a = observe(ths, 0.0, (0, 0, 0), np.random.default_rng(3), dropout=0.5)
    b = observe(ths, 0.0, (0, 0, 0), np.random.default_rng(3), dropout=0.5)
    assert [o.visible for o in a] == [o.visible for o in b]


def test_invalid_threats():
    with pytest.raises(ConfigError):
        Threat((0, 0, 0), (0, 1, 1))
    with pytest.raises(ConfigError):
        Threat((0, 0, 0), (1, 1, 1), (0, 1, 1))
    with pytest.raises(ConfigError):
        Threat((0, 0, 0), (1, 1, 1), r_obs=500.0, r_threaten=400.0)
    with pytest.raises(ConfigError):
        MotionPattern("spiral")
    with pytest.raises(ConfigError):
        MotionPattern("line", 1.0, 1.0, (1, 1, 0))
