"""Superquadric threat model, motion patterns and the range-limited sensor."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import CollisionError, ConfigError, DegenerateGeometryError

MOTION_KINDS = ("static", "line", "circle", "sine", "tangent")
TANGENT_CLAMP = 10.0

DEFAULT_SENSOR_RANGE = 10_000.0
DEFAULT_DROPOUT = 0.05


@dataclass(frozen=True)
class MotionPattern:
    kind: str = "static"
    amplitude: float = 0.0
    angular_rate: float = 0.0
    direction: tuple = (1.0, 0.0, 0.0)
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in MOTION_KINDS:
            raise ConfigError(f"unknown motion kind {self.kind!r}")
        d = tuple(float(c) for c in self.direction)
        object.__setattr__(self, "direction", d)
        if self.kind != "static" and abs(math.sqrt(sum(c * c for c in d)) - 1.0) > 1e-9:
            raise ConfigError("motion direction must be a unit vector")


@dataclass(frozen=True)
class Threat:
    """Superquadric obstacle ``F = sum(((x_i - c_i) / a_i) ** (2 * n_i))``."""

    center0: tuple
    semi_axes: tuple
    exponents: tuple = (1, 1, 1)
    motion: MotionPattern = field(default_factory=MotionPattern)
    r_obs: float = 1000.0
    r_threaten: float = 4000.0
    lam: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "center0", tuple(float(c) for c in self.center0))
        object.__setattr__(self, "semi_axes", tuple(float(c) for c in self.semi_axes))
        object.__setattr__(self, "exponents", tuple(int(c) for c in self.exponents))
        if len(self.center0) != 3 or len(self.semi_axes) != 3 or len(self.exponents) != 3:
            raise ConfigError("threat center, semi_axes and exponents need 3 components")
        if min(self.semi_axes) <= 0:
            raise ConfigError("semi-axes must be positive")
        if min(self.exponents) < 1:
            raise ConfigError("shape exponents must be >= 1")
        if not 0 < self.r_obs < self.r_threaten:
            raise ConfigError("need 0 < r_obs < r_threaten")
        if not self.lam > 0:
            raise ConfigError("lambda must be positive")


@dataclass(frozen=True)
class Observation:
    """What the sensor reports about one threat.

    When ``visible`` is False every other field is ``None``.
    """

    index: int
    visible: bool
    rel_position: Optional[np.ndarray] = None
    distance: Optional[float] = None
    threat_velocity: Optional[np.ndarray] = None
    center: Optional[np.ndarray] = None
    threat: Optional[Threat] = None


def position_at(motion: MotionPattern, center0, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Centre and velocity of a moving threat at time ``t``."""
    c0 = np.asarray(center0, dtype=np.float64)
    d = np.asarray(motion.direction, dtype=np.float64)
    A, w, ph = motion.amplitude, motion.angular_rate, motion.phase
    if motion.kind == "static":
        return c0.copy(), np.zeros(3)
    if motion.kind == "line":
        return c0 + A * w * t * d, A * w * d
    if motion.kind == "circle":
        a = w * t + ph
        pos = c0 + A * np.array([math.cos(a), math.sin(a), 0.0])
        vel = A * w * np.array([-math.sin(a), math.cos(a), 0.0])
        return pos, vel
    if motion.kind == "sine":
        a = w * t + ph
        return c0 + A * math.sin(a) * d, A * w * math.cos(a) * d
    # tangent: tan() clamped so the threat never leaves the area
    a = w * t + ph
    c = math.cos(a)
    s = math.tan(a) if c != 0.0 else math.copysign(math.inf, math.sin(a))
    if abs(s) >= TANGENT_CLAMP:
        return c0 + math.copysign(TANGENT_CLAMP, s) * A * d, np.zeros(3)
    return c0 + A * s * d, A * w / (c * c) * d


def threat_center(threat: Threat, t: float) -> np.ndarray:
    return position_at(threat.motion, threat.center0, t)[0]


def _value_at_center(threat: Threat, center: np.ndarray, p) -> float:
    q = (np.asarray(p, dtype=np.float64) - center) / np.asarray(threat.semi_axes)
    e = 2 * np.asarray(threat.exponents)
    return float(np.sum(q**e))


def threat_value(threat: Threat, t: float, p) -> float:
    """Superquadric threat function; < 1 inside, 1 on the surface, > 1 outside."""
    return _value_at_center(threat, threat_center(threat, t), p)


def threat_values(threat: Threat, t: float, points: np.ndarray) -> np.ndarray:
    """Vectorised :func:`threat_value` over an (N, 3) array."""
    q = (np.asarray(points, dtype=np.float64) - threat_center(threat, t)) / np.asarray(threat.semi_axes)
    return np.sum(q ** (2 * np.asarray(threat.exponents)), axis=-1)


def _gradient_at_center(threat: Threat, center: np.ndarray, p) -> np.ndarray:
    a = np.asarray(threat.semi_axes)
    n = np.asarray(threat.exponents)
    q = (np.asarray(p, dtype=np.float64) - center) / a
    return 2 * n * q ** (2 * n - 1) / a


def threat_normal(threat: Threat, t: float, p) -> np.ndarray:
    """Analytic gradient of :func:`threat_value` (outward surface normal, unnormalised)."""
    g = _gradient_at_center(threat, threat_center(threat, t), p)
    if not np.any(g):
        raise DegenerateGeometryError("threat gradient vanishes at the threat centre")
    return g


def _radial_scale(threat: Threat, center: np.ndarray, p, tol: float = 1e-6) -> float:
    """Solve F(center + s (p - center)) = 1 for s in (0, 1] by damped Newton."""
    q = (np.asarray(p, dtype=np.float64) - center) / np.asarray(threat.semi_axes)
    e = 2 * np.asarray(threat.exponents, dtype=np.float64)
    coef = q**e
    f_p = coef.sum()
    if f_p < 1.0:
        raise CollisionError("point lies inside the threat")
    if f_p == 1.0:
        return 1.0
    dist = float(np.linalg.norm(np.asarray(p, dtype=np.float64) - center))
    # lowest exponent gives an upper bracket start; F(s) is increasing in s
    s = f_p ** (-1.0 / e.max())
    lo, hi = 0.0, 1.0
    for _ in range(100):
        g = float(np.sum(coef * s**e)) - 1.0
        if g > 0:
            hi = s
        else:
            lo = s
        dg = float(np.sum(e * coef * s ** (e - 1)))
        step = g / dg if dg > 0 else 0.0
        s_new = s - step
        if not lo < s_new < hi:
            s_new = 0.5 * (lo + hi)
        if abs(s_new - s) * dist < tol * 1e-3:
            s = s_new
            break
        s = s_new
    return s


def project_to_surface(threat: Threat, t: float, p) -> np.ndarray:
    """Radial projection of an outside point onto the F = 1 surface."""
    c = threat_center(threat, t)
    s = _radial_scale(threat, c, p)
    return c + s * (np.asarray(p, dtype=np.float64) - c)


def nearest_surface_distance(threat: Threat, t: float, p) -> float:
    """Distance from ``p`` to the threat surface along the chord towards the centre.

    Raises:
        CollisionError: if ``p`` is inside the threat.
    """
    c = threat_center(threat, t)
    s = _radial_scale(threat, c, p)
    return max(0.0, (1.0 - s) * float(np.linalg.norm(np.asarray(p, dtype=np.float64) - c)))


def observe(
    threats: Sequence[Threat],
    t: float,
    agent_position,
    rng: np.random.Generator,
    sensor_range: float = DEFAULT_SENSOR_RANGE,
    dropout: float = DEFAULT_DROPOUT,
) -> list[Observation]:
    """Range-gated, lossy threat reports.

    One uniform draw is consumed per in-range threat so the rng stream does
    not depend on the dropout probability.
    """
    p = np.asarray(agent_position, dtype=np.float64)
    out = []
    for k, threat in enumerate(threats):
        center, vel = position_at(threat.motion, threat.center0, t)
        try:
            s = _radial_scale(threat, center, p)
        except CollisionError:
            s = 1.0
        offset = p - center
        surface = center + s * offset
        dist = max(0.0, (1.0 - s) * float(np.linalg.norm(offset)))
        if dist > sensor_range:
            out.append(Observation(k, False))
            continue
        if rng.random() < dropout:
            out.append(Observation(k, False))
            continue
        out.append(
            Observation(
                k,
                True,
                rel_position=surface - p,
                distance=dist,
                threat_velocity=vel,
                center=center,
                threat=threat,
            )
        )
    return out
