"""Rollouts, the PPO training loop with periodic evaluation, and the
three-arm benchmark (learned field parameters, fixed parameters, RRT*)."""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import wrap_angle
from .errors import CollisionError
from .flowfield import FieldAction
from .mdrrt import PlannerConfig, World, densify, plan
from .mission import STATE_DIM, Env, EpisodeRecord, episode_return, metrics
from .ppo import ActorCritic, PolicyOutput, PpoLearner, RolloutBuffer, sample_action, squash_action
from .scenario import Scenario
from .terrain import TerrainGrid, height_at
from .threats import nearest_surface_distance, threat_value

IFDS_ACTION = dict(rho=0.6, sigma=0.8, theta=1.1)


def thread_cap(requested: int) -> int:
    """Worker count limited by the TFTA_THREADS environment variable."""
    cap = os.environ.get("TFTA_THREADS")
    if cap:
        try:
            return max(1, min(requested, int(cap)))
        except ValueError:
            pass
    return max(1, requested)


def episode_rng(seed: int, stream: int, episode: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream, episode])


# -- rollouts ---------------------------------------------------------------


@dataclass
class Transition:
    state: np.ndarray
    sample: np.ndarray
    log_prob: float
    reward: float
    value: float
    done: bool


def run_episode(
    env: Env,
    start,
    goal,
    rng: np.random.Generator,
    ac: Optional[ActorCritic] = None,
    greedy: bool = False,
    fixed_action: Optional[FieldAction] = None,
) -> tuple[EpisodeRecord, list]:
    """Fly one episode with the policy (sampled or mean action) or a fixed action."""
    s = env.reset(start, goal, rng)
    out = []
    while not env.done:
        tic = time.perf_counter()
        if fixed_action is not None:
            action, samp, lp, value = fixed_action, None, 0.0, 0.0
        else:
            mean = ac.actor.forward(s)
            if greedy:
                action, samp, lp, value = squash_action(np.clip(mean, -1 + 1e-6, 1 - 1e-6)), None, 0.0, 0.0
            else:
                value = float(ac.critic.forward(s)[0])
                a = sample_action(PolicyOutput(mean, ac.log_std, value), rng)
                action, samp, lp = squash_action(a.raw), a.sample, a.log_prob
        policy_ms = (time.perf_counter() - tic) * 1e3
        s_next, r, done, _ = env.step(action, rng, policy_ms)
        if samp is not None:
            out.append(Transition(s, samp, lp, r, value, done))
        s = s_next
    return env.record, out


def evaluate(scenario: Scenario, env: Env, ac: ActorCritic, n: int, seed: int) -> tuple[float, float]:
    """Greedy rollouts on fixed spawn points; returns (mean return, success rate)."""
    returns, wins = [], 0
    for k in range(n):
        rng = episode_rng(seed, 2, k)
        start, goal = scenario.spawn(env.terrain, rng)
        rec, _ = run_episode(env, start, goal, rng, ac, greedy=True)
        returns.append(episode_return(rec))
        wins += rec.outcome == "goal"
    return float(np.mean(returns)), wins / n


# worker-side copy of the environment, built once per process
_WORKER: dict = {}


def _worker_init(scenario: Scenario, terrain: TerrainGrid, key_points: bool):
    _WORKER["scenario"] = scenario
    _WORKER["env"] = scenario.make_env(terrain, key_points=key_points)


def _worker_episode(args):
    ac, seed, episode = args
    sc = _WORKER["scenario"]
    return _collect(sc, _WORKER["env"], ac, seed, episode)


def _collect(scenario: Scenario, env: Env, ac: ActorCritic, seed: int, episode: int):
    rng = episode_rng(seed, 1, episode)
    start, goal = scenario.spawn(env.terrain, rng)
    rec, trans = run_episode(env, start, goal, rng, ac)
    return rec.outcome, rec.key_point_events, episode_return(rec), trans


# -- training ---------------------------------------------------------------


@dataclass
class LogRow:
    episode: int
    mean_return: float
    success_rate: float
    key_point_events: int

    def line(self) -> str:
        return f"{self.episode},{self.mean_return!r},{self.success_rate!r},{self.key_point_events}"


LOG_HEADER = "episode,mean_return,success_rate,key_point_events"


@dataclass
class TrainResult:
    ac: ActorCritic
    log: list = field(default_factory=list)
    aborted: bool = False
    message: str = ""
    episodes_run: int = 0
    outcomes: dict = field(default_factory=dict)

    def first_reaching(self, threshold: float) -> Optional[int]:
        for row in self.log:
            if row.success_rate >= threshold:
                return row.episode
        return None


def train(
    scenario: Scenario,
    episodes: Optional[int] = None,
    seed: Optional[int] = None,
    key_points: bool = True,
    workers: Optional[int] = None,
    ac: Optional[ActorCritic] = None,
    on_log: Optional[Callable[[LogRow], None]] = None,
    on_checkpoint: Optional[Callable[[ActorCritic, int], None]] = None,
    stop_at: Optional[float] = None,
) -> TrainResult:
    """Collect episodes, update with PPO whenever a full batch is buffered,
    and evaluate the greedy policy every ``eval_every`` episodes.

    ``stop_at`` ends training early once the evaluation success rate
    reaches that value.
    """
    tc = scenario.train
    episodes = tc.episodes if episodes is None else episodes
    seed = scenario.seed if seed is None else seed
    workers = thread_cap(tc.workers if workers is None else workers)
    terrain = scenario.load_terrain()
    env = scenario.make_env(terrain, key_points=key_points)
    eval_env = scenario.make_env(terrain, key_points=False)
    ac = ac or ActorCritic(STATE_DIM, seed=seed)
    learner = PpoLearner(ac, scenario.ppo)
    update_rng = episode_rng(seed, 3, 0)
    buf = RolloutBuffer()
    result = TrainResult(ac)
    kp_events = 0
    pool = None
    if workers > 1:
        pool = ProcessPoolExecutor(workers, initializer=_worker_init, initargs=(scenario, terrain, key_points))
    try:
        ep = 0
        while ep < episodes:
            n_round = min(workers, episodes - ep)
            jobs = [(ac, seed, ep + k) for k in range(n_round)]
            if pool is None:
                batch = [_collect(scenario, env, ac, s, e) for _, s, e in jobs]
            else:
                batch = list(pool.map(_worker_episode, jobs))
            for outcome, events, _, trans in batch:
                ep += 1
                kp_events += events
                result.outcomes[outcome] = result.outcomes.get(outcome, 0) + 1
                for tr in trans:
                    buf.add(tr.state, tr.sample, tr.log_prob, tr.reward, tr.value, tr.done)
            if len(buf) >= scenario.ppo.batch_size:
                report = learner.update(buf.batch(scenario.ppo), update_rng)
                buf.clear()
                if report.aborted:
                    result.aborted = True
                    result.message = report.message
                    if on_checkpoint:
                        on_checkpoint(ac, ep)
                    break
            if tc.checkpoint_every and ep % tc.checkpoint_every < n_round and on_checkpoint:
                on_checkpoint(ac, ep)
            if ep % tc.eval_every < n_round:
                mean_ret, rate = evaluate(scenario, eval_env, ac, tc.eval_episodes, tc.eval_seed)
                row = LogRow(ep, mean_ret, rate, kp_events)
                result.log.append(row)
                if on_log:
                    on_log(row)
                if stop_at is not None and rate >= stop_at:
                    break
    finally:
        if pool is not None:
            pool.shutdown()
    result.episodes_run = ep if episodes else 0
    return result


# -- benchmark --------------------------------------------------------------

BENCH_ARMS = ("rfppo", "ifds", "rrt")


def ifds_action(beta: float) -> FieldAction:
    return FieldAction(beta, **IFDS_ACTION)


def fly_path(env: Env, points: np.ndarray, start, goal, planned_at: float = 0.0) -> EpisodeRecord:
    """Open-loop replay of a planned polyline at cruise speed, one point per step.

    Threats keep moving during the replay; collisions, ground contact and
    map exits end the record with the matching outcome.
    """
    rec = EpisodeRecord()
    speed = env.speed
    dt = env.cfg.dt
    g = env.limits.gravity
    prev_heading = None
    t = planned_at
    for k in range(1, len(points)):
        p0, p = points[k - 1], points[k]
        t += dt
        d = p - p0
        heading = math.atan2(d[1], d[0])
        climb = math.atan2(d[2], math.hypot(d[0], d[1]))
        roll = 0.0
        if prev_heading is not None:
            dphi = wrap_angle(heading - prev_heading)
            chord = math.hypot(d[0], d[1])
            kappa = 2.0 * math.sin(0.5 * dphi) / chord if chord > 0 else 0.0
            roll = math.atan(kappa * speed * speed / g)
        prev_heading = heading
        inside = env.terrain.contains(p[0], p[1])
        agl = float(p[2] - height_at(env.terrain, p[0], p[1])) if inside else math.nan
        rec.rows.append((t, *p, agl, speed, climb, heading, roll, math.nan, math.nan, math.nan, math.nan,
                         0.0, 0.0, 0.0, 0.0, 0.0, env_threat_distance(env, t, p)))
        rec.latencies_ms.append(0.0)
        if not inside:
            rec.set_outcome("out_of_map")
            return rec
        if agl <= 0:
            rec.set_outcome("ground")
            return rec
        if any(threat_value(th, t, p) <= 1.0 for th in env.threats):
            rec.set_outcome("collision")
            return rec
    end = points[-1]
    rec.set_outcome("goal" if np.linalg.norm(end - goal) <= env.cfg.goal_radius else "timeout")
    return rec


def env_threat_distance(env: Env, t: float, p) -> float:
    """True distance to the nearest threat surface (0 inside a threat)."""
    if not env.threats:
        return math.nan
    ds = []
    for th in env.threats:
        try:
            ds.append(nearest_surface_distance(th, t, p))
        except CollisionError:
            ds.append(0.0)
    return min(ds)


def bench(
    scenario: Scenario,
    ac: Optional[ActorCritic],
    seed: Optional[int] = None,
    episodes: int = 1,
    arms=BENCH_ARMS,
    ifds_beta: float = 0.3,
    planner: Optional[PlannerConfig] = None,
    rrt_iters: int = 1500,
) -> list[dict]:
    """Fly every arm on identical spawns and threat histories.

    Returns one row per (arm, episode) with the path metrics and the
    minimum true surface distance to any threat.
    """
    seed = scenario.seed if seed is None else seed
    terrain = scenario.load_terrain()
    env = scenario.make_env(terrain, key_points=False)
    rows = []
    for k in range(episodes):
        for arm in arms:
            rng = episode_rng(seed, 4, k)
            start, goal = scenario.spawn(terrain, rng)
            try:
                if arm == "rfppo":
                    rec, _ = run_episode(env, start, goal, rng, ac, greedy=True)
                elif arm == "ifds":
                    rec, _ = run_episode(env, start, goal, rng, fixed_action=ifds_action(ifds_beta))
                elif arm == "rrt":
                    rec = _rrt_arm(env, scenario, start, goal, rng, planner, rrt_iters)
                else:
                    raise ValueError(f"unknown arm {arm!r}")
                m = metrics(rec, start) if len(rec.rows) >= 2 else _short_metrics(rec)
                m["min_threat_distance_m"] = _true_min_distance(env, rec)
            except Exception as exc:  # a crashing arm is reported, not fatal
                m = {"outcome": f"error: {type(exc).__name__}: {exc}"}
            rows.append({"arm": arm, "episode": k, **m})
    return rows


def _short_metrics(rec: EpisodeRecord) -> dict:
    return {"path_length_m": 0.0, "max_climb_deg": 0.0, "smoothness": 0.0, "latency_p50_ms": 0.0,
            "latency_p99_ms": 0.0, "outcome": rec.outcome, "steps": len(rec.rows)}


def _true_min_distance(env: Env, rec: EpisodeRecord) -> float:
    ds = [env_threat_distance(env, r[0], np.array(r[1:4])) for r in rec.rows]
    ds = [d for d in ds if not math.isnan(d)]
    return float(min(ds)) if ds else math.inf


def _rrt_arm(env: Env, scenario: Scenario, start, goal, rng, planner: Optional[PlannerConfig],
             iters: int = 1500) -> EpisodeRecord:
    cfg = planner or PlannerConfig(
        speed=env.speed, dt=env.cfg.dt, h_down=scenario.reward.h_down, h_up=scenario.reward.h_up,
        goal_radius=env.cfg.goal_radius, iter_max=iters, time_budget=None,
    )
    world = World(env.terrain, env.threats, 0.0, env.limits)
    res = plan(start, goal, world, cfg, rng)
    if not res.reachable:
        rec = EpisodeRecord()
        rec.set_outcome("key_point_fail")
        return rec
    pts = densify(res, env.speed * env.cfg.dt)
    return fly_path(env, pts, start, goal)
