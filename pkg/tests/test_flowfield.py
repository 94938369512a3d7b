import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tfta.errors import CollisionError, ConfigError, DegenerateGeometryError
from tfta.flowfield import (
    FieldAction,
    FieldConfig,
    field_terms,
    flow_velocity,
    free_stream,
    ground_velocity,
    obstacle_weights,
    repulsive_matrix,
    tangent_direction,
    tangential_matrix,
)
from tfta.threats import MotionPattern, Threat, observe, threat_normal, threat_value

CFG = FieldConfig()
MID = FieldAction(1.0, 1.0, 1.0, 0.5)


def _see(threats, p, t=0.0):
    return observe(threats, t, p, np.random.default_rng(0), dropout=0.0)


def test_free_stream_examples():
    np.testing.assert_allclose(free_stream((0, 0, 0), (1000, 0, 0), 200), [200, 0, 0])
    np.testing.assert_allclose(free_stream((0, 0, 0), (300, 400, 0), 100), [60, 80, 0])
    with pytest.raises(DegenerateGeometryError):
        free_stream((1, 2, 3), (1, 2, 3), 100)


@settings(max_examples=100, deadline=None)
@given(st.tuples(*[st.floats(-1e4, 1e4)] * 3), st.floats(1.0, 500.0))
def test_free_stream_magnitude(goal, speed):
    if np.linalg.norm(goal) < 1e-3:
        return
    assert np.linalg.norm(free_stream((0, 0, 0), goal, speed)) == pytest.approx(speed)


def test_repulsive_examples():
    R = repulsive_matrix(1.0, (1, 0, 0), 0.7)
    expected = np.zeros((3, 3))
    expected[0, 0] = -1.0
    np.testing.assert_allclose(R, expected)
    R = repulsive_matrix(4.0, (0, 2, 0), 0.5)
    expected = np.zeros((3, 3))
    expected[1, 1] = -1.0 / 16.0
    np.testing.assert_allclose(R, expected)
    assert np.abs(repulsive_matrix(1e12, (1, 2, 3), 1.0)).max() < 1e-11
    with pytest.raises(DegenerateGeometryError):
        repulsive_matrix(2.0, (0, 0, 0), 1.0)


def test_repulsive_structure():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = rng.normal(size=3)
        R = repulsive_matrix(rng.uniform(1, 10), n, rng.uniform(0.05, 3))
        np.testing.assert_allclose(R, R.T)
        assert np.linalg.matrix_rank(R, tol=1e-12) == 1
        assert np.all(np.linalg.eigvalsh(R) <= 1e-12)


def test_tangent_orthogonal_to_normal():
    n = threat_normal(Threat((0, 0, 0), (1, 1, 1)), 0.0, (1, 0, 0))
    for theta in np.linspace(-3.1, 3.1, 13):
        t, fb = tangent_direction(n, theta)
        assert not fb
        assert abs(np.dot(t, n)) < 1e-12


def test_tangential_theta_flip():
    n = np.array([0.3, -1.2, 0.8])
    T0, _ = tangential_matrix(2.0, n, n, 1.0, 0.0)
    Tpi, _ = tangential_matrix(2.0, n, n, 1.0, math.pi)
    np.testing.assert_allclose(Tpi, -T0, atol=1e-15)
    T_far, _ = tangential_matrix(1e12, n, n, 1.0, 0.4)
    assert np.abs(T_far).max() < 1e-11


def test_tangent_fallback_vertical_normal():
    t, fb = tangent_direction((0.0, 0.0, 2.0), 0.3)
    assert fb
    assert t[2] == 0.0 and np.linalg.norm(t) == pytest.approx(1.0)


def test_ground_examples():
    v = ground_velocity(300.0, 1.0, 300.0, 200.0)
    assert v[2] == pytest.approx(200.0 * math.log(2.0))
    lo = ground_velocity(123.0, 0.05, 300.0, 200.0)[2]
    hi = ground_velocity(123.0, 3.0, 300.0, 200.0)[2]
    assert hi / lo == pytest.approx(60.0)
    assert ground_velocity(1e12, 1.0, 300.0, 200.0)[2] < 1e-6
    with pytest.raises(CollisionError):
        ground_velocity(0.0, 1.0, 300.0, 200.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(1.0, 1e5), st.floats(1.0, 1e5))
def test_ground_decreasing(a, b):
    if a == b:
        return
    lo, hi = sorted((a, b))
    assert ground_velocity(lo, 1.0, 300.0, 200.0)[2] > ground_velocity(hi, 1.0, 300.0, 200.0)[2]


def test_weights_examples():
    np.testing.assert_allclose(obstacle_weights([5.0]), [1.0])
    np.testing.assert_allclose(obstacle_weights([2.0, 3.0]), [2 / 3, 1 / 3])
    np.testing.assert_allclose(obstacle_weights([2.0, 2.0]), [0.5, 0.5])
    with pytest.raises(CollisionError):
        obstacle_weights([1.0, 2.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(1.001, 1e4), min_size=2, max_size=6))
def test_weights_properties(F):
    w = obstacle_weights(F)
    assert np.all(w > 0) and np.all(w <= 1)
    order = np.argsort(F)
    # closer threats never weigh less
    assert np.all(np.diff(w[order]) <= 1e-12)


def test_free_stream_recovery():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        p = rng.uniform(-5000, 5000, 3)
        goal = rng.uniform(-5000, 5000, 3)
        agl = rng.uniform(100 * CFG.height_safe, 1e6)
        a = FieldAction(*rng.uniform(0.05, 3.0, 3), rng.uniform(-3.1, 3.1))
        u = free_stream(p, goal, CFG.cruise_speed)
        v = flow_velocity(p, goal, a, [], agl, CFG)
        assert np.linalg.norm(v - u) / np.linalg.norm(u) < 1e-6


def test_tangency_at_surface():
    th = Threat((0, 0, 0), (1, 1, 1), r_obs=0.5, r_threaten=2.0)
    p = np.array([1.0 + 5e-10, 0, 0])
    assert threat_value(th, 0.0, p) == pytest.approx(1.0 + 1e-9)
    for rho in (0.05, 1.0, 3.0):
        a = FieldAction(1.0, rho, 1.0, 0.0)
        terms = field_terms(p, (-100, 0, 0), a, _see([th], p), None, CFG)
        n_hat = p / np.linalg.norm(p)
        u = terms.free_stream
        v_ir = (np.eye(3) + repulsive_matrix(threat_value(th, 0.0, p), threat_normal(th, 0.0, p), rho)) @ u
        assert abs(v_ir @ n_hat) < 1e-6 * np.linalg.norm(u)
        # the tangential part is orthogonal to the normal too
        assert abs(terms.velocity @ n_hat) < 1e-6 * np.linalg.norm(u)


def test_static_reduces_to_modulated_stream():
    th = Threat((3000, 0, 500), (500, 500, 800))
    p = np.array([0.0, 200.0, 400.0])
    obs = _see([th], p)
    terms = field_terms(p, (8000, 0, 500), MID, obs, 400.0, CFG)
    np.testing.assert_allclose(terms.feedthrough, 0.0)
    np.testing.assert_allclose(terms.velocity, terms.modulation @ terms.free_stream + terms.ground)


def test_moving_threat_feedthrough():
    th = Threat((3000, 0, 500), (500, 500, 800), motion=MotionPattern("line", 10.0, 1.0, (0, 1, 0)))
    p = np.array([2000.0, 0.0, 500.0])
    terms = field_terms(p, (8000, 0, 500), MID, _see([th], p), None, CFG)
    F = threat_value(th, 0.0, p)
    np.testing.assert_allclose(terms.feedthrough, math.exp(-(F - 1) / th.lam) * np.array([0, 10.0, 0]))
    u, M, f = terms.free_stream, terms.modulation, terms.feedthrough
    np.testing.assert_allclose(terms.velocity, M @ (u - f) + f)


def test_theta_changes_only_tangential_term():
    th = Threat((3000, 0, 500), (500, 500, 800))
    p = np.array([1500.0, 300.0, 600.0])
    obs = _see([th], p)
    F = threat_value(th, 0.0, p)
    n = threat_normal(th, 0.0, p)
    u = free_stream(p, (8000, 0, 500), CFG.cruise_speed)
    base = (np.eye(3) + repulsive_matrix(F, n, 1.0)) @ u
    for theta in (-2.0, 0.0, 1.0, 3.0):
        v = flow_velocity(p, (8000, 0, 500), FieldAction(1.0, 1.0, 1.0, theta), obs, None, CFG)
        T, _ = tangential_matrix(F, n, n, 1.0, theta)
        np.testing.assert_allclose(v - T @ u, base, atol=1e-9)


def test_r_conf_gating():
    th = Threat((3000, 0, 500), (500, 500, 800))
    p = np.array([0.0, 0.0, 500.0])
    cfg = FieldConfig(r_conf=1000.0)
    v = flow_velocity(p, (8000, 0, 500), MID, _see([th], p), None, cfg)
    np.testing.assert_allclose(v, free_stream(p, (8000, 0, 500), cfg.cruise_speed))


def test_inside_threat_raises():
    th = Threat((0, 0, 0), (500, 500, 500))
    p = np.array([100.0, 0.0, 0.0])
    obs = _see([th], np.array([2000.0, 0, 0]))
    with pytest.raises(CollisionError):
        flow_velocity(p, (8000, 0, 0), MID, obs, None, CFG)
    with pytest.raises(CollisionError):
        flow_velocity((0, 0, 0), (1, 0, 0), MID, [], 0.0, CFG)


def test_continuity():
    th = [Threat((3000, 0, 500), (500, 500, 800)), Threat((5000, 1500, 400), (700, 400, 900), (2, 2, 1))]
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(300):
        p = rng.uniform([0, -3000, 100], [8000, 3000, 1500])
        if min(threat_value(t, 0.0, p) for t in th) < 1.05:
            continue
        q = p + rng.normal(size=3) * (0.1 / math.sqrt(3))
        obs_p = _see(th, p)
        a = flow_velocity(p, (9000, 0, 500), MID, obs_p, 400.0, CFG)
        b = flow_velocity(q, (9000, 0, 500), MID, obs_p, 400.0 + q[2] - p[2], CFG)
        worst = max(worst, float(np.linalg.norm(a - b)))
    assert worst < 1.0


def test_decay_monotone():
    n = np.array([0.4, -0.3, 0.9])
    Fs = np.linspace(1.0, 50.0, 200)
    for rho in (0.05, 1.0, 3.0):
        mags = [np.abs(repulsive_matrix(F, n, rho)) for F in Fs]
        tans = [np.abs(tangential_matrix(F, n, n, rho, 0.7)[0]) for F in Fs]
        for seq in (mags, tans):
            assert all(np.all(b <= a + 1e-15) for a, b in zip(seq, seq[1:]))


def test_literal_ground_mode_scales_stream():
    cfg = FieldConfig(ground_mode="literal")
    v = flow_velocity((0, 0, 0), (1000, 0, 0), MID, [], 600.0, cfg)
    np.testing.assert_allclose(v, [200 * math.log(3.0), 0, 0])


def test_action_validation():
    with pytest.raises(ConfigError):
        FieldAction(0.0, 1.0, 1.0, 0.0)
    with pytest.raises(ConfigError):
        FieldAction(1.0, 3.5, 1.0, 0.0)
    with pytest.raises(ConfigError):
        FieldAction(1.0, 1.0, 1.0, -math.pi)
    FieldAction(0.05, 3.0, 1.0, math.pi)
    with pytest.raises(ConfigError):
        FieldConfig(ground_mode="sideways")
