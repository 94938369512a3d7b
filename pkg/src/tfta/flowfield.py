"""Disturbed fluid field: free stream modulated by threats plus a ground term.

Each visible threat contributes a modulation matrix ``M_k = I + R_k + T_k``
(repulsive projector plus tangential guidance). The matrices are blended with
distance weights, applied to the free stream relative to the threat motion,
and a vertical ground-disturbance velocity is added on top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import CollisionError, ConfigError, DegenerateGeometryError
from .threats import Observation, _gradient_at_center, _value_at_center

ACTION_LOW = 0.05
ACTION_HIGH = 3.0

GROUND_MODES = ("upward", "literal")


@dataclass(frozen=True)
class FieldAction:
    beta: float
    rho: float
    sigma: float
    theta: float

    def __post_init__(self):
        for name in ("beta", "rho", "sigma"):
            v = getattr(self, name)
            if not ACTION_LOW <= v <= ACTION_HIGH:
                raise ConfigError(f"{name}={v} outside [{ACTION_LOW}, {ACTION_HIGH}]")
        if not -math.pi < self.theta <= math.pi:
            raise ConfigError(f"theta={self.theta} outside (-pi, pi]")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.beta, self.rho, self.sigma, self.theta)


@dataclass(frozen=True)
class FieldConfig:
    """Field constants.

    The ground term fades out smoothly between ``ground_fade_start`` and
    ``ground_fade_end`` (both multiples of ``height_safe``) so that the
    field reduces exactly to the free stream high above the terrain.
    """

    cruise_speed: float = 200.0
    r_conf: float = 10_000.0
    height_safe: float = 300.0
    ground_mode: str = "upward"
    ground_fade_start: float = 20.0
    ground_fade_end: float = 50.0

    def __post_init__(self):
        if min(self.cruise_speed, self.r_conf, self.height_safe) <= 0:
            raise ConfigError("field config values must be positive")
        if self.ground_mode not in GROUND_MODES:
            raise ConfigError(f"ground_mode must be one of {GROUND_MODES}")
        if not 0 < self.ground_fade_start < self.ground_fade_end:
            raise ConfigError("need 0 < ground_fade_start < ground_fade_end")


def free_stream(p, goal, cruise_speed: float) -> np.ndarray:
    d = np.asarray(goal, dtype=np.float64) - np.asarray(p, dtype=np.float64)
    n = float(np.linalg.norm(d))
    if n == 0.0:
        raise DegenerateGeometryError("free stream undefined at the goal")
    return cruise_speed * d / n


def repulsive_matrix(F_k: float, n_k, rho: float) -> np.ndarray:
    n = np.asarray(n_k, dtype=np.float64)
    nn = float(n @ n)
    if nn == 0.0:
        raise DegenerateGeometryError("zero threat normal")
    return -np.outer(n, n) / (abs(F_k) ** (1.0 / rho) * nn)


def tangent_direction(partials, theta: float) -> tuple[np.ndarray, bool]:
    """Unit tangent ``cos(theta) t1_hat + sin(theta) t2_hat``.

    Returns the tangent and a flag that is True when the gradient had no
    horizontal part and a fixed horizontal frame was substituted.
    """
    fx, fy, fz = (float(v) for v in partials)
    t1 = np.array([fy, -fx, 0.0])
    t2 = np.array([fx * fz, fy * fz, -(fx * fx) - fy * fy])
    n1 = float(np.linalg.norm(t1))
    n2 = float(np.linalg.norm(t2))
    if n1 == 0.0 or n2 == 0.0:
        return np.array([math.cos(theta), math.sin(theta), 0.0]), True
    return math.cos(theta) * t1 / n1 + math.sin(theta) * t2 / n2, False


def tangential_matrix(F_k: float, n_k, partials, sigma: float, theta: float) -> tuple[np.ndarray, bool]:
    n = np.asarray(n_k, dtype=np.float64)
    n_norm = float(np.linalg.norm(n))
    if n_norm == 0.0:
        raise DegenerateGeometryError("zero threat normal")
    t, fallback = tangent_direction(partials, theta)
    return np.outer(t, n) / (abs(F_k) ** (1.0 / sigma) * float(np.linalg.norm(t)) * n_norm), fallback


def _ground_fade(agl: float, cfg: FieldConfig) -> float:
    lo = cfg.ground_fade_start * cfg.height_safe
    hi = cfg.ground_fade_end * cfg.height_safe
    if agl <= lo:
        return 1.0
    if agl >= hi:
        return 0.0
    s = (agl - lo) / (hi - lo)
    return 1.0 - s * s * (3.0 - 2.0 * s)


def ground_velocity(agl: float, beta: float, height_safe: float, cruise_speed: float) -> np.ndarray:
    """Upward ground-disturbance velocity; grows logarithmically as the terrain gets close."""
    if agl <= 0:
        raise CollisionError(f"agl {agl:.2f} m: aircraft is at or below the terrain")
    return np.array([0.0, 0.0, cruise_speed * beta * math.log(height_safe / agl + 1.0)])


def obstacle_weights(F_values: Sequence[float]) -> np.ndarray:
    """Blend weights; a threat the agent is closer to (smaller F - 1) weighs more."""
    g = np.asarray(F_values, dtype=np.float64) - 1.0
    if g.size == 0:
        return g
    if np.any(g <= 0):
        raise CollisionError("agent on a threat surface")
    if g.size == 1:
        return np.ones(1)
    w = np.ones(g.size)
    for k in range(g.size):
        for i in range(g.size):
            if i != k:
                w[k] *= g[i] / (g[i] + g[k])
    return w


@dataclass
class FieldTerms:
    """Intermediate quantities of one field evaluation, for telemetry and tests."""

    velocity: np.ndarray
    free_stream: np.ndarray
    modulation: np.ndarray
    ground: np.ndarray
    feedthrough: np.ndarray
    weights: np.ndarray
    tangent_fallback: bool = False


def field_terms(
    p,
    goal,
    action: FieldAction,
    observations: Sequence[Observation],
    terrain_agl: Optional[float],
    config: FieldConfig,
    t: float = 0.0,
) -> FieldTerms:
    """Evaluate the field and keep every intermediate term.

    ``terrain_agl=None`` disables the ground term (used when no terrain
    applies, e.g. analytic checks).
    """
    p = np.asarray(p, dtype=np.float64)
    u = free_stream(p, goal, config.cruise_speed)
    F_list, mats, vels, lams = [], [], [], []
    fallback = False
    eye = np.eye(3)
    for ob in observations:
        if not ob.visible or ob.distance >= config.r_conf:
            continue
        th = ob.threat
        F = _value_at_center(th, ob.center, p)
        if F <= 1.0:
            raise CollisionError("agent inside a visible threat")
        n = _gradient_at_center(th, ob.center, p)
        R = repulsive_matrix(F, n, action.rho)
        T, fb = tangential_matrix(F, n, n, action.sigma, action.theta)
        fallback |= fb
        F_list.append(F)
        mats.append((R, T))
        vels.append(ob.threat_velocity)
        lams.append(th.lam)

    literal = config.ground_mode == "literal"
    if terrain_agl is not None and terrain_agl <= 0:
        raise CollisionError("aircraft at or below terrain")
    ground = np.zeros(3)
    ground_scale = 1.0
    if terrain_agl is not None:
        if literal:
            ground_scale = action.beta * math.log(terrain_agl / config.height_safe + 1.0)
        else:
            ground = _ground_fade(terrain_agl, config) * ground_velocity(
                terrain_agl, action.beta, config.height_safe, config.cruise_speed
            )
    base = ground_scale * eye if literal else eye

    if not F_list:
        M = base.copy()
        feed = np.zeros(3)
        w = np.zeros(0)
        v_bar = M @ u
    else:
        w = obstacle_weights(F_list)
        M = np.zeros((3, 3))
        feed = np.zeros(3)
        for wk, (R, T), F, v, lam in zip(w, mats, F_list, vels, lams):
            M += wk * (base + R + T)
            feed += wk * math.exp(-(F - 1.0) / lam) * np.asarray(v, dtype=np.float64)
        v_bar = M @ (u - feed) + feed
    return FieldTerms(v_bar + ground, u, M, ground, feed, w, fallback)


def flow_velocity(
    p,
    goal,
    action: FieldAction,
    observations: Sequence[Observation],
    terrain_agl: Optional[float],
    config: FieldConfig,
    t: float = 0.0,
) -> np.ndarray:
    """Planning velocity of the disturbed field at ``p``."""
    return field_terms(p, goal, action, observations, terrain_agl, config, t).velocity
