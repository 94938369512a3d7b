"""Episode environment: state encoding, shaped reward, the per-step flight
pipeline, termination and trajectory metrics."""

from __future__ import annotations

import csv
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dynamics import AircraftState, KinematicLimits, kinematic_correct, wrap_angle
from .errors import CollisionError, ConfigError, TftaError
from .flowfield import FieldAction, FieldConfig, field_terms
from .mdrrt import DEFAULT_KEY_FRACTIONS, KeyPointGate, PlannerConfig, World, key_point_check
from .terrain import TerrainGrid, height_at
from .threats import DEFAULT_DROPOUT, DEFAULT_SENSOR_RANGE, Observation, Threat, observe, threat_value

STATE_DIM = 16
DIST_SCALE = 1000.0  # metres per unit inside the log1p distance slots
ABSENT = -1.0

OUTCOMES = ("goal", "collision", "ground", "out_of_map", "key_point_fail", "timeout")
FAILURES = ("collision", "ground", "out_of_map", "key_point_fail")
OBSTACLE_MODES = ("increasing", "literal")


@dataclass(frozen=True)
class RewardConfig:
    w_h: float = 1.0
    w_o: float = 1.0
    w_p: float = 0.5
    w_r: float = 0.01
    chi_w: float = 1.0
    delta_w: float = 1.0
    h_down: float = 450.0
    h_up: float = 550.0
    alpha_o: float = 1.0
    beta_o: float = 1.0
    kappa: float = 1.0
    phi_w: float = 1.0
    phi_good: float = math.radians(25.0)
    obstacle_mode: str = "increasing"
    sum_threats: bool = False
    # opt-in: crashes and map exits also pay the -T penalty of a failed key point
    penalize_crash: bool = False

    def __post_init__(self):
        weights = (self.w_h, self.w_o, self.w_p, self.w_r, self.chi_w, self.delta_w,
                   self.alpha_o, self.beta_o, self.kappa, self.phi_w)
        if min(weights) < 0:
            raise ConfigError("reward weights must be non-negative")
        if not 0 < self.h_down < self.h_up:
            raise ConfigError("need 0 < h_down < h_up")
        if not self.phi_good > 0:
            raise ConfigError("phi_good must be positive")
        if self.obstacle_mode not in OBSTACLE_MODES:
            raise ConfigError(f"obstacle_mode must be one of {OBSTACLE_MODES}")


# -- state encoding ---------------------------------------------------------


def _encode_offset(offset) -> list:
    v = np.asarray(offset, dtype=np.float64)
    d = float(np.linalg.norm(v))
    if d == 0.0:
        return [0.0, 0.0, 0.0, 0.0]
    return [*(v / d), math.log1p(d / DIST_SCALE)]


def decode_offset(block) -> np.ndarray:
    """Inverse of the (unit vector, distance slot) encoding."""
    b = np.asarray(block, dtype=np.float64)
    if b[3] < 0:
        return np.zeros(3)
    return b[:3] * (DIST_SCALE * math.expm1(b[3]))


def nearest_visible(observations: Sequence[Observation]) -> Optional[Observation]:
    best = None
    for ob in observations:
        if ob.visible and (best is None or ob.distance < best.distance):
            best = ob
    return best


def build_state(
    agent: AircraftState,
    start,
    goal,
    observations: Sequence[Observation],
    terrain: TerrainGrid,
    h_up: float = 550.0,
    limits: KinematicLimits = KinematicLimits(),
) -> np.ndarray:
    """16-dim policy input.

    Blocks: start offset (4), goal offset (4), nearest visible threat
    surface offset (4, distance slot -1 when nothing is visible), agl / h_up,
    climb / gamma_max, sin and cos of the track heading.
    """
    p = agent.position
    s = np.empty(STATE_DIM)
    s[0:4] = _encode_offset(np.asarray(start, dtype=np.float64) - p)
    s[4:8] = _encode_offset(np.asarray(goal, dtype=np.float64) - p)
    ob = nearest_visible(observations)
    s[8:12] = [0.0, 0.0, 0.0, ABSENT] if ob is None else _encode_offset(ob.rel_position)
    s[12] = (p[2] - height_at(terrain, p[0], p[1])) / h_up
    s[13] = agent.climb_angle / limits.gamma_max
    s[14] = math.sin(agent.track_heading)
    s[15] = math.cos(agent.track_heading)
    return s


# -- reward terms -----------------------------------------------------------


def reward_height(h: float, d_now: float, d_all: float, cfg: RewardConfig) -> float:
    """Altitude-band shaping minus normalised remaining distance."""
    if h <= 0:
        raise CollisionError("reward_height needs a positive agl")
    return (
        -cfg.chi_w * (cfg.h_down - h) / h
        - cfg.delta_w * (h - cfg.h_up) / h
        - d_now / d_all
    )


def reward_obstacle(d: float, r_obs: float, r_threaten: float, cfg: RewardConfig) -> float:
    """Threat-proximity shaping.

    ``literal`` evaluates the two linear terms with their printed signs,
    which penalise moving away. The default flips the signs so the term
    rises with ``d`` and caps it at 0 (no bonus for being far away).
    """
    a = (d - r_obs) / r_obs
    b = (d - r_obs - r_threaten) / (r_obs + r_threaten)
    if cfg.obstacle_mode == "literal":
        return -cfg.alpha_o * a - cfg.beta_o * b
    return min(0.0, cfg.alpha_o * a + cfg.beta_o * b)


def _posture_term(angle: float, weight: float, phi_good: float) -> float:
    excess = abs(angle) - phi_good
    if excess <= 0:
        return 0.0
    return -weight * math.log(excess / phi_good + 1.0)


def reward_posture(climb: float, track_change: float, cfg: RewardConfig) -> float:
    """Sparse penalty once the climb angle or per-step track change exceeds ``phi_good``."""
    return _posture_term(climb, cfg.kappa, cfg.phi_good) + _posture_term(track_change, cfg.phi_w, cfg.phi_good)


@dataclass(frozen=True)
class RewardComponents:
    r_h: float = 0.0
    r_obs: float = 0.0
    r_p: float = 0.0
    r_rrt: float = 0.0


def total_reward(components: RewardComponents, key_point_result, cfg: RewardConfig) -> float:
    """Weighted sum; ``key_point_result`` is a failed plan (its ``fail_estimate`` is T), a bare T, or None."""
    r_rrt = components.r_rrt
    if key_point_result is not None:
        T = getattr(key_point_result, "fail_estimate", key_point_result)
        r_rrt = -float(T)
    return cfg.w_h * components.r_h + cfg.w_o * components.r_obs + cfg.w_p * components.r_p + cfg.w_r * r_rrt


# -- episode record ---------------------------------------------------------

RECORD_FIELDS = (
    "time", "x", "y", "z", "agl", "speed", "climb", "heading", "roll",
    "beta", "rho", "sigma", "theta",
    "reward", "r_h", "r_obs", "r_p", "r_rrt", "threat_distance",
)


@dataclass
class EpisodeRecord:
    rows: list = field(default_factory=list)
    outcome: Optional[str] = None
    key_point_events: int = 0
    # wall-clock per decision; kept out of equality so records stay reproducible
    latencies_ms: list = field(default_factory=list, compare=False)

    def set_outcome(self, outcome: str) -> None:
        if self.outcome is not None:
            raise TftaError(f"outcome already set to {self.outcome!r}")
        if outcome not in OUTCOMES:
            raise ConfigError(f"unknown outcome {outcome!r}")
        self.outcome = outcome

    def column(self, name: str) -> np.ndarray:
        i = RECORD_FIELDS.index(name)
        return np.array([r[i] for r in self.rows], dtype=np.float64)

    def positions(self) -> np.ndarray:
        return np.array([r[1:4] for r in self.rows], dtype=np.float64).reshape(-1, 3)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(RECORD_FIELDS)
            for r in self.rows:
                w.writerow([repr(float(v)) for v in r])


# -- environment ------------------------------------------------------------


@dataclass(frozen=True)
class MissionConfig:
    dt: float = 1.0
    goal_radius: float = 500.0
    max_steps: Optional[int] = None
    key_points: bool = True
    key_fractions: tuple = DEFAULT_KEY_FRACTIONS
    sensor_range: float = DEFAULT_SENSOR_RANGE
    dropout: float = DEFAULT_DROPOUT
    planner_iters: int = 40
    planner_restarts: int = 10
    planner_goal_bias: float = 0.2

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not self.goal_radius > 0:
            raise ConfigError("goal_radius must be positive")


@dataclass
class StepInfo:
    outcome: Optional[str]
    components: RewardComponents
    terms: object = None
    key_point: object = None


class Env:
    """One episode at a time over shared, immutable scenario data."""

    def __init__(
        self,
        terrain: TerrainGrid,
        threats: Sequence[Threat] = (),
        limits: KinematicLimits = KinematicLimits(),
        field_config: FieldConfig = FieldConfig(),
        reward_config: RewardConfig = RewardConfig(),
        mission_config: MissionConfig = MissionConfig(),
        planner_config: Optional[PlannerConfig] = None,
    ):
        self.terrain = terrain
        self.threats = tuple(threats)
        self.limits = limits
        self.field = field_config
        self.reward_cfg = reward_config
        self.cfg = mission_config
        self.planner = planner_config or PlannerConfig(
            speed=field_config.cruise_speed,
            dt=mission_config.dt,
            h_down=reward_config.h_down,
            h_up=reward_config.h_up,
            goal_radius=mission_config.goal_radius,
            iter_max=mission_config.planner_iters,
            restarts=mission_config.planner_restarts,
            goal_bias=mission_config.planner_goal_bias,
            time_budget=None,
            stop_at_first=True,
        )
        self.done = True

    @property
    def speed(self) -> float:
        return self.field.cruise_speed

    def reset(self, start, goal, rng: np.random.Generator, heading: Optional[float] = None) -> np.ndarray:
        self.start = np.asarray(start, dtype=np.float64).copy()
        self.goal = np.asarray(goal, dtype=np.float64).copy()
        self.d_all = float(np.linalg.norm(self.goal - self.start))
        if self.d_all == 0.0:
            raise ConfigError("start and goal coincide")
        if heading is None:
            heading = math.atan2(self.goal[1] - self.start[1], self.goal[0] - self.start[0])
        self.state = AircraftState(self.start, self.speed, 0.0, wrap_angle(heading), 0.0)
        self.t = 0.0
        self.steps = 0
        self.max_steps = self.cfg.max_steps or 3 * math.ceil(self.d_all / (self.speed * self.cfg.dt))
        self.gate = KeyPointGate(self.d_all, self.cfg.key_fractions) if self.cfg.key_points else None
        self.record = EpisodeRecord()
        self.done = False
        if not self.terrain.contains(self.start[0], self.start[1]):
            self._finish("out_of_map")
        elif self._agl(self.start) <= 0:
            self._finish("ground")
        elif any(threat_value(th, 0.0, self.start) <= 1.0 for th in self.threats):
            self._finish("collision")
        self.observations = [] if self.done else self._observe(rng)
        return self.observe_state()

    def _finish(self, outcome: str) -> None:
        self.record.set_outcome(outcome)
        self.done = True

    def _agl(self, p) -> float:
        return float(p[2] - height_at(self.terrain, p[0], p[1]))

    def _observe(self, rng) -> list:
        return observe(self.threats, self.t, self.state.position, rng, self.cfg.sensor_range, self.cfg.dropout)

    def observe_state(self) -> np.ndarray:
        if not self.terrain.contains(self.state.position[0], self.state.position[1]):
            return np.zeros(STATE_DIM)
        return build_state(self.state, self.start, self.goal, self.observations, self.terrain,
                           self.reward_cfg.h_up, self.limits)

    def decide(self, action: FieldAction):
        """Field velocity, unrestricted waypoint and kinematic correction for the current state."""
        p = self.state.position
        terms = field_terms(p, self.goal, action, self.observations, self._agl(p), self.field, self.t)
        target = p + terms.velocity * self.cfg.dt
        _, new_state, corr = kinematic_correct(None, p, target, self.state, self.limits, self.cfg.dt)
        return terms, new_state, corr

    def _crash_check(self, p0, p1, t1) -> Optional[str]:
        for frac in (0.5, 1.0):
            q = p0 + frac * (p1 - p0)
            if not self.terrain.contains(q[0], q[1]):
                return "out_of_map"
            if self._agl(q) <= 0:
                return "ground"
            tq = self.t + frac * (t1 - self.t)
            if any(threat_value(th, tq, q) <= 1.0 for th in self.threats):
                return "collision"
        return None

    def step(self, action: FieldAction, rng: np.random.Generator, policy_ms: float = 0.0):
        """Advance one decision. Returns ``(state_vector, reward, done, info)``.

        The logged latency covers the field evaluation, kinematic correction
        and state encoding, plus ``policy_ms`` supplied by the caller for
        the network forward pass. Key-point planning is not included.
        """
        if self.done:
            raise TftaError("step() called on a finished episode")
        tic = time.perf_counter()
        prev = self.state
        outcome = None
        terms = None
        try:
            terms, new_state, _ = self.decide(action)
        except CollisionError:
            new_state = prev
            outcome = "collision"
        latency = (time.perf_counter() - tic) * 1e3 + policy_ms
        t1 = self.t + self.cfg.dt
        if outcome is None:
            outcome = self._crash_check(prev.position, new_state.position, t1)
        self.state = new_state
        self.t = t1
        self.steps += 1
        p = self.state.position
        d_now = float(np.linalg.norm(self.goal - p))

        if outcome is None and d_now <= self.cfg.goal_radius:
            outcome = "goal"
        kp = None
        r_rrt = 0.0
        if outcome is None and self.gate is not None:
            before = self.gate.events
            world = World(self.terrain, self.threats, self.t, self.limits)
            kp = key_point_check(self.state, self.goal, self.gate, world, self.planner, rng)
            self.record.key_point_events += self.gate.events - before
            if kp is not None:
                outcome = "key_point_fail"
                r_rrt = -float(kp.fail_estimate)
        if outcome in ("collision", "ground", "out_of_map") and self.reward_cfg.penalize_crash:
            r_rrt = -float(math.ceil(d_now / (self.speed * self.cfg.dt)))
        if outcome is None and self.steps >= self.max_steps:
            outcome = "timeout"

        in_map = self.terrain.contains(p[0], p[1])
        self.observations = self._observe(rng) if in_map and outcome is None else []
        comps = self._components(prev, d_now, r_rrt, in_map)
        reward = total_reward(comps, None, self.reward_cfg)

        ob = nearest_visible(self.observations)
        s = self.state
        self.record.rows.append((
            self.t, p[0], p[1], p[2], self._agl(p) if in_map else math.nan, s.speed, s.climb_angle,
            s.track_heading, s.roll, *action.as_tuple(), reward, comps.r_h, comps.r_obs, comps.r_p,
            comps.r_rrt, ob.distance if ob is not None else math.nan,
        ))
        if outcome is not None:
            self._finish(outcome)
        tic = time.perf_counter()
        state_vec = self.observe_state()
        self.record.latencies_ms.append(latency + (time.perf_counter() - tic) * 1e3)
        return state_vec, reward, self.done, StepInfo(outcome, comps, terms, kp)

    def _components(self, prev: AircraftState, d_now: float, r_rrt: float, in_map: bool) -> RewardComponents:
        cfg = self.reward_cfg
        p = self.state.position
        h = self._agl(p) if in_map else 0.0
        r_h = reward_height(h, d_now, self.d_all, cfg) if h > 0 else 0.0
        r_obs = 0.0
        visible = [ob for ob in self.observations if ob.visible]
        if visible:
            chosen = visible if cfg.sum_threats else [nearest_visible(visible)]
            r_obs = sum(reward_obstacle(ob.distance, ob.threat.r_obs, ob.threat.r_threaten, cfg) for ob in chosen)
        turn = wrap_angle(self.state.track_heading - prev.track_heading)
        r_p = reward_posture(self.state.climb_angle, turn, cfg)
        return RewardComponents(r_h, r_obs, r_p, r_rrt)


# -- metrics ----------------------------------------------------------------

METRIC_KEYS = (
    "path_length_m", "max_climb_deg", "smoothness", "latency_p50_ms", "latency_p99_ms", "outcome",
)


def smoothness(points) -> float:
    """Mean squared turning angle between consecutive segments (repeated points skipped)."""
    pts = np.asarray(points, dtype=np.float64)
    seg = np.diff(pts, axis=0)
    norms = np.linalg.norm(seg, axis=1)
    keep = norms > 0
    if not np.all(keep):
        warnings.warn(f"skipping {int(np.sum(~keep))} repeated trajectory points", RuntimeWarning, stacklevel=2)
    seg = seg[keep] / norms[keep, None]
    if len(seg) < 2:
        return 0.0
    cosang = np.clip(np.sum(seg[:-1] * seg[1:], axis=1), -1.0, 1.0)
    ang = np.arccos(cosang)
    return float(np.sum(ang * ang) / len(ang))


def realized_turn_radii(record: EpisodeRecord) -> np.ndarray:
    """Horizontal turn radius of every logged step (inf for straight steps)."""
    pos = record.positions()
    hdg = record.column("heading")
    chord = np.hypot(np.diff(pos[:, 0]), np.diff(pos[:, 1]))
    dphi = np.abs(np.array([wrap_angle(a) for a in np.diff(hdg)]))
    with np.errstate(divide="ignore"):
        return np.where(dphi > 0, chord / (2.0 * np.sin(0.5 * dphi)), np.inf)


def check_limits(record: EpisodeRecord, limits: KinematicLimits, speed: float, tol: float = 1e-6) -> list:
    """Every step inside the climb bound and at or above the minimum turn radius."""
    problems = []
    climb = record.column("climb")
    bad = np.flatnonzero(np.abs(climb) > limits.gamma_max + 1e-12)
    problems += [f"step {i}: climb {math.degrees(climb[i]):.6f} deg" for i in bad]
    r_min = limits.min_turn_radius(speed)
    radii = realized_turn_radii(record)
    bad = np.flatnonzero(radii < r_min - tol)
    problems += [f"step {i + 1}: turn radius {radii[i]:.6f} m" for i in bad]
    return problems


def metrics(record: EpisodeRecord, start=None, limits: Optional[KinematicLimits] = None, speed: float = 200.0) -> dict:
    """Path length, peak climb, smoothness, latency percentiles and outcome.

    ``start`` (the spawn point) is prepended to the logged positions. With
    ``limits`` the record is also re-validated against the envelope.
    """
    pos = record.positions()
    if start is not None:
        pos = np.vstack([np.asarray(start, dtype=np.float64), pos])
    if len(pos) < 3:
        raise ConfigError("metrics need at least 3 points")
    climb = record.column("climb")
    lat = np.asarray(record.latencies_ms, dtype=np.float64)
    td = record.column("threat_distance")
    td = td[np.isfinite(td)]
    out = {
        "path_length_m": float(np.sum(np.linalg.norm(np.diff(pos, axis=0), axis=1))),
        "max_climb_deg": float(np.degrees(np.max(np.abs(climb)))) if climb.size else 0.0,
        "smoothness": smoothness(pos),
        "latency_p50_ms": float(np.percentile(lat, 50)) if lat.size else 0.0,
        "latency_p99_ms": float(np.percentile(lat, 99)) if lat.size else 0.0,
        "outcome": record.outcome,
        "min_threat_distance_m": float(td.min()) if td.size else math.inf,
        "steps": len(record.rows),
    }
    if limits is not None:
        out["limits_ok"] = not check_limits(record, limits, speed)
    return out


def episode_return(record: EpisodeRecord) -> float:
    return float(np.sum(record.column("reward"))) if record.rows else 0.0
