"""Fixed-wing kinematics: horizontal arc turns, point-mass vertical dynamics,
and the correction that pulls a field-proposed waypoint inside the limits."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Union

import numpy as np

from .errors import ConfigError, LimitsExceededError, SingularityError

ControlLaw = Callable[[np.ndarray], tuple]


@dataclass(frozen=True)
class KinematicLimits:
    gamma_max: float = math.radians(25.0)
    roll_max: float = math.radians(45.0)
    gravity: float = 9.81
    load_factor_max: float = 3.0

    def __post_init__(self):
        if min(self.gamma_max, self.roll_max, self.gravity, self.load_factor_max) <= 0:
            raise ConfigError("kinematic limits must be positive")
        if self.load_factor_max <= 1.0:
            raise ConfigError("load_factor_max must exceed 1 to allow any climb")

    def max_curvature(self, speed: float) -> float:
        return self.gravity * math.tan(self.roll_max) / (speed * speed)

    def min_turn_radius(self, speed: float) -> float:
        return speed * speed / (self.gravity * math.tan(self.roll_max))

    def max_climb_rate(self, speed: float) -> float:
        """Largest |d(gamma)/dt| reachable with the normal load-factor cap."""
        return self.gravity * (self.load_factor_max - 1.0) / speed


@dataclass(frozen=True)
class AircraftState:
    position: np.ndarray
    speed: float
    climb_angle: float = 0.0
    track_heading: float = 0.0
    roll: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64).copy())
        if not self.speed > 0:
            raise ConfigError("speed must be positive")

    def satisfies(self, limits: KinematicLimits, tol: float = 1e-12) -> bool:
        return (
            abs(self.climb_angle) <= limits.gamma_max + tol
            and abs(self.roll) <= limits.roll_max + tol
        )


@dataclass(frozen=True)
class Correction:
    """Details of one kinematic correction step."""

    demanded_turn: float
    demanded_climb: float
    curvature: float
    climb_start: float
    climb_end: float
    horizontal_distance: float
    fallback: bool = False


def wrap_angle(a: float) -> float:
    """Map an angle to (-pi, pi]."""
    a = math.remainder(a, 2.0 * math.pi)
    return math.pi if a == -math.pi else a


def horizontal_step(x1, y1, phi1, v, rho_T, dt, limits: KinematicLimits | None = None):
    """Constant-curvature turn in the horizontal plane.

    ``rho_T`` is the signed path curvature (1/m, positive = left turn); the
    heading advances by ``rho_T * v * dt``. Passing ``limits`` enforces the
    bank-angle curvature bound.
    """
    if dt <= 0:
        raise LimitsExceededError("dt must be positive")
    if limits is not None and abs(rho_T) > limits.max_curvature(v) * (1 + 1e-12):
        raise LimitsExceededError(
            f"curvature {rho_T:.3e} exceeds bank limit {limits.max_curvature(v):.3e}"
        )
    s = v * dt
    dphi = rho_T * s
    if abs(dphi) < 1e-9:
        # series of sin(x)/x and (1-cos x)/x keeps the straight limit exact
        fwd = s * (1.0 - dphi * dphi / 6.0)
        side = s * (dphi / 2.0 - dphi**3 / 24.0)
    else:
        fwd = math.sin(dphi) / rho_T
        side = (1.0 - math.cos(dphi)) / rho_T
    c, sn = math.cos(phi1), math.sin(phi1)
    return x1 + c * fwd - sn * side, y1 + sn * fwd + c * side, phi1 + dphi


def vertical_derivatives(state_vec, n_x: float, n_y: float, n_z: float, g: float) -> np.ndarray:
    """Right-hand side of the point-mass equations.

    ``state_vec`` is ``(x, y, z, V, gamma, chi)``; the result is the time
    derivative of each component.
    """
    _, _, _, V, gamma, chi = state_vec
    cg = math.cos(gamma)
    if V <= 0:
        raise SingularityError("speed must be positive")
    if cg <= 1e-6:
        raise SingularityError("near-vertical flight path")
    return np.array(
        [
            V * cg * math.cos(chi),
            V * cg * math.sin(chi),
            V * math.sin(gamma),
            (n_x - math.sin(gamma)) * g,
            g * (n_z - cg) / V,
            n_y * g / (V * cg),
        ]
    )


def _clamp(v, lim):
    return max(-lim, min(lim, v))


def integrate_vertical(
    state: AircraftState,
    controls: Union[tuple, ControlLaw],
    dt: float,
    limits: KinematicLimits = KinematicLimits(),
    substeps: int = 4,
) -> AircraftState:
    """RK4 integration of the point-mass equations over ``dt``.

    ``controls`` is either a constant ``(n_x, n_y, n_z)`` or a callable of
    the 6-vector state returning one; load factors are clamped to
    ``±load_factor_max`` before each evaluation.
    """
    cap = limits.load_factor_max
    g = limits.gravity

    def rhs(y):
        n = controls(y) if callable(controls) else controls
        return vertical_derivatives(y, *(_clamp(c, cap) for c in n), g)

    y = np.array([*state.position, state.speed, state.climb_angle, state.track_heading])
    h = dt / substeps
    for _ in range(substeps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return replace(state, position=y[:3], speed=float(y[3]), climb_angle=float(y[4]), track_heading=float(y[5]))


def climb_rate_law(gamma_rate: float, g: float) -> ControlLaw:
    """Controls that hold speed and a constant flight-path-angle rate, wings level."""

    def law(y):
        V, gamma = y[3], y[4]
        return math.sin(gamma), 0.0, math.cos(gamma) + V * gamma_rate / g

    return law


def demanded_turn_curvature(p_now, heading: float, target) -> tuple[float, float]:
    """Curvature of the circle tangent to ``heading`` at ``p_now`` through ``target``.

    Returns ``(curvature, bearing_offset)`` in the horizontal plane.
    """
    dx = float(target[0] - p_now[0])
    dy = float(target[1] - p_now[1])
    chord = math.hypot(dx, dy)
    if chord == 0.0:
        return 0.0, 0.0
    alpha = wrap_angle(math.atan2(dy, dx) - heading)
    if abs(alpha) > 0.5 * math.pi:
        # target behind the aircraft: any tangent circle is a loop the wrong
        # way round, so demand an unbounded turn towards it
        return math.copysign(math.inf, alpha), alpha
    return 2.0 * math.sin(alpha) / chord, alpha


def propagate(state: AircraftState, curvature: float, gamma_end: float, limits: KinematicLimits, dt: float):
    """Fly ``dt`` seconds at fixed speed with constant curvature and a linear climb-angle ramp."""
    V = state.speed
    gamma_rate = (gamma_end - state.climb_angle) / dt
    # the vertical plane is integrated along a fixed track; the resulting
    # horizontal path length then drives the arc
    level = replace(state, track_heading=0.0)
    vert = integrate_vertical(level, climb_rate_law(gamma_rate, limits.gravity), dt, limits)
    s_h = math.hypot(vert.position[0] - state.position[0], vert.position[1] - state.position[1])
    x, y, phi = horizontal_step(
        state.position[0], state.position[1], state.track_heading, s_h / dt, curvature, dt
    )
    pos = np.array([x, y, vert.position[2]])
    roll = math.atan(curvature * V * V / limits.gravity)
    new = replace(
        state,
        position=pos,
        climb_angle=_clamp(gamma_end, limits.gamma_max),
        track_heading=wrap_angle(phi),
        roll=_clamp(roll, limits.roll_max),
    )
    return new, s_h


def kinematic_correct(
    p_prev,
    p_now,
    p_unrestricted,
    state: AircraftState,
    limits: KinematicLimits,
    dt: float,
) -> tuple[np.ndarray, AircraftState, Correction]:
    """Pull the field-proposed waypoint back inside the aircraft envelope.

    The demanded turn is the circle tangent to the current track through the
    proposed point; the demanded climb is the elevation angle of the proposed
    displacement. Both are clamped (bank-angle curvature bound, climb-angle
    bound, climb-rate bound from the load-factor cap) and the aircraft is
    flown forward at constant speed for ``dt``.

    ``p_prev`` is accepted for interface symmetry; the current track comes
    from ``state``.
    """
    p_now = np.asarray(p_now, dtype=np.float64)
    target = np.asarray(p_unrestricted, dtype=np.float64)
    delta = target - p_now
    V = state.speed
    gamma0 = state.climb_angle
    if not np.any(delta):
        new, s_h = propagate(state, 0.0, gamma0, limits, dt)
        return new.position, new, Correction(0.0, gamma0, 0.0, gamma0, gamma0, s_h, fallback=True)

    kappa_dem, _ = demanded_turn_curvature(p_now, state.track_heading, target)
    gamma_dem = math.atan2(delta[2], math.hypot(delta[0], delta[1]))

    kappa = _clamp(kappa_dem, limits.max_curvature(V))
    max_step = limits.max_climb_rate(V) * dt
    gamma_end = _clamp(gamma_dem, limits.gamma_max)
    if abs(gamma_end - gamma0) > max_step:
        gamma_end = _clamp(gamma0 + math.copysign(max_step, gamma_end - gamma0), limits.gamma_max)

    new, s_h = propagate(state, kappa, gamma_end, limits, dt)
    return new.position, new, Correction(kappa_dem, gamma_dem, kappa, gamma0, gamma_end, s_h)
