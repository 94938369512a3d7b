"""Dynamics-constrained informed RRT* and the key-point reachability gate.

New nodes are produced by flying the kinematic model towards the random
sample. Tree edges are Dubins curves at the bank-limited turn radius with a
constant climb gradient, so every node keeps a fixed pose and rewiring never
invalidates the turn-radius or climb-angle limits of other edges.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import dubins
from .dynamics import AircraftState, KinematicLimits, kinematic_correct
from .terrain import TerrainGrid, heights_at
from .threats import Threat, threat_values

EDGE_SAMPLES = 10
COLLISION_SPACING = 100.0  # metres between collision samples on an edge


@dataclass(frozen=True)
class PlannerConfig:
    speed: float = 200.0
    dt: float = 1.0
    step: float = 1000.0
    goal_radius: float = 500.0
    w_len: float = 1.0
    w_tf: float = 0.5
    h_down: float = 450.0
    h_up: float = 550.0
    min_agl: float = 0.0
    gamma_rrt: float = 10_000.0
    r_near_max: float = 3000.0
    iter_max: int = 4000
    time_budget: Optional[float] = 8.0
    goal_bias: float = 0.05
    stop_at_first: bool = False
    connect_radius: float = math.inf
    # independent short searches tried by the key-point check before giving up
    restarts: int = 1

    @property
    def h_ref(self) -> float:
        return 0.5 * (self.h_down + self.h_up)


@dataclass
class World:
    """What the planner collides against: terrain and threats frozen at time ``t``."""

    terrain: TerrainGrid
    threats: Sequence[Threat] = ()
    t: float = 0.0
    limits: KinematicLimits = field(default_factory=KinematicLimits)


@dataclass
class TreeNode:
    position: np.ndarray
    heading: float
    climb: float
    parent: Optional[int]
    cost_to_come: float


@dataclass
class PlanResult:
    reachable: bool
    path: Optional[list] = None
    fail_estimate: int = 0
    cost: float = math.inf
    iterations: int = 0
    c_best_history: list = field(default_factory=list)
    tree: Optional["Tree"] = None


@dataclass
class Edge:
    path: dubins.DubinsPath
    z0: float
    z1: float
    length: float
    tf_penalty: Optional[float] = None
    _pts: Optional[np.ndarray] = None

    def points(self, n: int = EDGE_SAMPLES) -> np.ndarray:
        """``n`` evenly spaced 3-D points from start to end, inclusive."""
        if n == EDGE_SAMPLES and self._pts is not None:
            return self._pts
        ss = np.linspace(0.0, self.path.length, n)
        xyh = self.path.sample_many(ss)
        frac = ss / self.path.length if self.path.length > 0 else np.zeros(n)
        pts = np.column_stack([xyh[:, :2], self.z0 + frac * (self.z1 - self.z0)])
        if n == EDGE_SAMPLES:
            self._pts = pts
        return pts

    @property
    def climb(self) -> float:
        return math.atan2(self.z1 - self.z0, self.path.length)

    def cost(self, terrain: TerrainGrid, config: PlannerConfig) -> float:
        if config.w_tf == 0.0:
            return config.w_len * self.length
        if self.tf_penalty is None:
            pts = self.points()
            if np.all(terrain.contains(pts[:, 0], pts[:, 1])):
                agl = pts[:, 2] - heights_at(terrain, pts[:, 0], pts[:, 1])
                self.tf_penalty = float(np.mean(np.abs(agl - config.h_ref)))
            else:
                self.tf_penalty = math.inf
        return config.w_len * self.length + config.w_tf * self.tf_penalty


def edge_cost(a: TreeNode, b: TreeNode, terrain: TerrainGrid, config: PlannerConfig, limits: KinematicLimits) -> float:
    """Cost of flying from ``a`` to ``b``: weighted length plus mean terrain-following error."""
    e = _make_edge(a.position, a.heading, b.position, b.heading, limits.min_turn_radius(config.speed))
    return e.cost(terrain, config)


def _make_edge(p_a, h_a, p_b, h_b, radius) -> Edge:
    path = dubins.shortest_path((p_a[0], p_a[1], h_a), (p_b[0], p_b[1], h_b), radius)
    return Edge(path, float(p_a[2]), float(p_b[2]), math.hypot(path.length, p_b[2] - p_a[2]))


def _edge_free(edge: Edge, world: World, config: PlannerConfig) -> bool:
    if abs(edge.climb) > world.limits.gamma_max:
        return False
    n = max(EDGE_SAMPLES, math.ceil(edge.length / COLLISION_SPACING) + 1)
    pts = edge.points(n)
    if not np.all(world.terrain.contains(pts[:, 0], pts[:, 1])):
        return False
    agl = pts[:, 2] - heights_at(world.terrain, pts[:, 0], pts[:, 1])
    if np.any(agl <= config.min_agl):
        return False
    for th in world.threats:
        if np.any(threat_values(th, world.t, pts) <= 1.0):
            return False
    return True


def collision_free(a: TreeNode, b: TreeNode, world: World, config: PlannerConfig) -> bool:
    e = _make_edge(a.position, a.heading, b.position, b.heading, world.limits.min_turn_radius(config.speed))
    return _edge_free(e, world, config)


def sample_in_ellipse(
    p_start,
    p_goal,
    c_best: float,
    rng: np.random.Generator,
    bounds: Optional[tuple] = None,
    z_band=None,
    max_tries: int = 200,
) -> np.ndarray:
    """Uniform sample in the prolate spheroid with foci ``p_start``/``p_goal``.

    ``c_best`` is the focal path length; ``inf`` samples the bounding box
    ``bounds = (x_min, x_max, y_min, y_max, z_min, z_max)`` instead.
    ``z_band(x, y) -> (z_lo, z_hi)`` optionally clamps altitude; with a
    finite ``c_best`` the clamped sample is rejected unless it stays inside
    the spheroid.
    """
    a = np.asarray(p_start, dtype=np.float64)
    b = np.asarray(p_goal, dtype=np.float64)
    if not math.isfinite(c_best):
        if bounds is None:
            raise ValueError("infinite c_best needs sampling bounds")
        x = rng.uniform(bounds[0], bounds[1])
        y = rng.uniform(bounds[2], bounds[3])
        z = rng.uniform(bounds[4], bounds[5])
        if z_band is not None:
            lo, hi = z_band(x, y)
            z = min(max(z, lo), hi)
        return np.array([x, y, z])

    c_min = float(np.linalg.norm(b - a))
    c_best = max(c_best, c_min)
    centre = 0.5 * (a + b)
    C = _rotation_to_world(b - a)
    r1 = 0.5 * c_best
    r2 = 0.5 * math.sqrt(max(c_best * c_best - c_min * c_min, 0.0))
    radii = np.array([r1, r2, r2])
    s = None
    for _ in range(max_tries):
        ball = _unit_ball(rng)
        s = centre + C @ (radii * ball)
        if bounds is not None and not (bounds[0] <= s[0] <= bounds[1] and bounds[2] <= s[1] <= bounds[3]):
            continue
        if z_band is None:
            return s
        lo, hi = z_band(s[0], s[1])
        s[2] = min(max(s[2], lo), hi)
        if np.linalg.norm(s - a) + np.linalg.norm(s - b) <= c_best:
            return s
    # nothing admissible found: fall back to a point on the focal segment
    return a + rng.uniform() * (b - a)


def _unit_ball(rng) -> np.ndarray:
    v = rng.normal(size=3)
    v /= np.linalg.norm(v)
    return v * rng.uniform() ** (1.0 / 3.0)


def _rotation_to_world(axis) -> np.ndarray:
    """Rotation whose first column is the unit ``axis``."""
    n = float(np.linalg.norm(axis))
    if n == 0.0:
        return np.eye(3)
    e1 = np.asarray(axis) / n
    M = np.outer(e1, [1.0, 0.0, 0.0])
    U, _, Vt = np.linalg.svd(M)
    D = np.diag([1.0, 1.0, np.linalg.det(U) * np.linalg.det(Vt)])
    return U @ D @ Vt


def steer(
    p_near: TreeNode,
    p_rand,
    step: float,
    limits: KinematicLimits,
    speed: float = 200.0,
) -> TreeNode:
    """Fly the kinematic model from ``p_near`` towards ``p_rand`` for one step."""
    pos = np.asarray(p_near.position, dtype=np.float64)
    d = np.asarray(p_rand, dtype=np.float64) - pos
    n = float(np.linalg.norm(d))
    target = pos + (d / n) * step if n > 0 else pos
    state = AircraftState(pos, speed, p_near.climb, p_near.heading)
    p_new, new_state, _ = kinematic_correct(pos, pos, target, state, limits, step / speed)
    return TreeNode(p_new, new_state.track_heading, new_state.climb_angle, None, math.inf)


class Tree:
    """Array-backed search tree."""

    def __init__(self, root: TreeNode, capacity: int = 1024):
        self.pos = np.zeros((capacity, 3))
        self.heading = np.zeros(capacity)
        self.climb = np.zeros(capacity)
        self.parent = np.full(capacity, -1, dtype=np.int64)
        self.cost = np.zeros(capacity)
        self.edge_cost = np.zeros(capacity)
        self.edges: list = []
        self.children: list = []
        self.n = 0
        self.add(root.position, root.heading, root.climb, -1, 0.0, 0.0, None)

    def add(self, pos, heading, climb, parent, cost, ecost, edge) -> int:
        if self.n == len(self.cost):
            self._grow()
        i = self.n
        self.pos[i] = pos
        self.heading[i] = heading
        self.climb[i] = climb
        self.parent[i] = parent
        self.cost[i] = cost
        self.edge_cost[i] = ecost
        self.edges.append(edge)
        self.children.append([])
        if parent >= 0:
            self.children[parent].append(i)
        self.n += 1
        return i

    def _grow(self):
        cap = 2 * len(self.cost)
        for name in ("pos", "heading", "climb", "parent", "cost", "edge_cost"):
            old = getattr(self, name)
            new = np.full((cap,) + old.shape[1:], -1 if name == "parent" else 0, dtype=old.dtype)
            new[: len(old)] = old
            setattr(self, name, new)

    def node(self, i: int) -> TreeNode:
        p = int(self.parent[i])
        return TreeNode(self.pos[i].copy(), float(self.heading[i]), float(self.climb[i]), None if p < 0 else p, float(self.cost[i]))

    def reparent(self, i: int, parent: int, ecost: float, edge) -> None:
        old = int(self.parent[i])
        self.children[old].remove(i)
        self.children[parent].append(i)
        self.parent[i] = parent
        self.edge_cost[i] = ecost
        self.edges[i] = edge
        # recompute subtree costs top-down so each equals parent + edge exactly
        stack = [i]
        while stack:
            k = stack.pop()
            self.cost[k] = self.cost[self.parent[k]] + self.edge_cost[k]
            stack.extend(self.children[k])

    def path_to(self, i: int) -> list:
        out = []
        while i >= 0:
            out.append(i)
            i = int(self.parent[i])
        return out[::-1]


def _r_near(n: int, config: PlannerConfig) -> float:
    if n < 2:
        return config.r_near_max
    return min(config.gamma_rrt * (math.log(n) / n) ** (1.0 / 3.0), config.r_near_max)


def plan(
    p_start,
    p_goal,
    world: World,
    config: PlannerConfig,
    rng: np.random.Generator,
    start_heading: Optional[float] = None,
    start_climb: float = 0.0,
    iter_max: Optional[int] = None,
) -> PlanResult:
    """Grow the tree from ``p_start`` and return the cheapest path into the goal region."""
    start = np.asarray(p_start, dtype=np.float64)
    goal = np.asarray(p_goal, dtype=np.float64)
    if start_heading is None:
        start_heading = math.atan2(goal[1] - start[1], goal[0] - start[0])
    limits = world.limits
    radius = limits.min_turn_radius(config.speed)
    grade = _grade(world)
    iters = config.iter_max if iter_max is None else iter_max
    tree = Tree(TreeNode(start, start_heading, start_climb, None, 0.0))
    x0, x1, y0, y1 = world.terrain.bounds
    hmin, hmax = float(world.terrain.heights.min()), float(world.terrain.heights.max())
    bounds = (x0, x1, y0, y1, hmin + config.h_down, hmax + config.h_up)

    def z_band(x, y):
        h = float(heights_at(world.terrain, x, y))
        return h + config.h_down, h + config.h_up

    solutions: list[int] = []
    c_best = math.inf
    history = []
    t_begin = time.perf_counter()
    it = 0
    for it in range(1, iters + 1):
        if solutions:
            c_best = min(tree.cost[i] for i in solutions)
        history.append(c_best)
        if config.time_budget is not None and time.perf_counter() - t_begin > config.time_budget:
            break
        if rng.uniform() < config.goal_bias:
            p_rand = goal.copy()
        else:
            p_rand = sample_in_ellipse(start, goal, c_best / config.w_len if config.w_len > 0 else math.inf,
                                       rng, bounds, z_band)
        d2 = np.sum((tree.pos[: tree.n] - p_rand) ** 2, axis=1)
        i_near = int(np.argmin(d2))
        new = steer(tree.node(i_near), p_rand, config.step, limits, config.speed)
        if not world.terrain.contains(new.position[0], new.position[1]):
            continue
        e_near = _make_edge(tree.pos[i_near], tree.heading[i_near], new.position, new.heading, radius)
        if not _edge_free(e_near, world, config):
            continue
        # choose parent among neighbours, cheapest lower bound first
        r = _r_near(tree.n, config)
        dn = np.sum((tree.pos[: tree.n] - new.position) ** 2, axis=1)
        near = np.flatnonzero(dn <= r * r)
        best_parent = i_near
        best_edge = e_near
        best_ecost = e_near.cost(world.terrain, config)
        best_cost = tree.cost[i_near] + best_ecost
        bound = tree.cost[near] + config.w_len * np.sqrt(dn[near])
        for k in near[np.argsort(bound, kind="stable")]:
            k = int(k)
            if tree.cost[k] + config.w_len * math.sqrt(dn[k]) >= best_cost:
                break
            if k == i_near:
                continue
            e = _make_edge(tree.pos[k], tree.heading[k], new.position, new.heading, radius)
            if tree.cost[k] + config.w_len * e.length >= best_cost:
                continue
            ec = e.cost(world.terrain, config)
            if tree.cost[k] + ec < best_cost and _edge_free(e, world, config):
                best_parent, best_edge, best_ecost, best_cost = k, e, ec, tree.cost[k] + ec
        j = tree.add(new.position, new.heading, new.climb, best_parent, tree.cost[best_parent] + best_ecost, best_ecost, best_edge)
        # rewire neighbours through the new node
        gain = tree.cost[near] - (tree.cost[j] + config.w_len * np.sqrt(dn[near]))
        for k in near[gain > 0]:
            k = int(k)
            if k == best_parent or k == 0:
                continue
            e = _make_edge(tree.pos[j], tree.heading[j], tree.pos[k], tree.heading[k], radius)
            if tree.cost[j] + config.w_len * e.length >= tree.cost[k]:
                continue
            ec = e.cost(world.terrain, config)
            if tree.cost[j] + ec < tree.cost[k] and not _is_ancestor(tree, k, j) and _edge_free(e, world, config):
                tree.reparent(k, j, ec, e)
        d_goal = float(np.linalg.norm(new.position - goal))
        if d_goal <= config.goal_radius:
            solutions.append(j)
        elif d_goal <= config.connect_radius:
            # try to close the gap with one edge straight into the goal
            for e in _goal_edges(tree.pos[j], tree.heading[j], goal, radius, config.goal_radius, grade):
                if _edge_free(e, world, config):
                    ec = e.cost(world.terrain, config)
                    end_pos, end_heading = _edge_end(e)
                    solutions.append(tree.add(end_pos, end_heading, e.climb, j, tree.cost[j] + ec, ec, e))
                    break
        if solutions and config.stop_at_first:
            break
    if solutions:
        best = min(solutions, key=lambda i: tree.cost[i])
        history.append(float(tree.cost[best]))
        idx = tree.path_to(best)
        return PlanResult(True, [tree.pos[i].copy() for i in idx], 0, float(tree.cost[best]), it, history, tree)
    remaining = float(np.linalg.norm(goal - start))
    return PlanResult(False, None, math.ceil(remaining / (config.speed * config.dt)), math.inf, it, history, tree)


def _arrival_heading(p, heading: float, goal) -> float:
    """Heading on reaching ``goal`` along the circular arc tangent to ``heading`` at ``p``."""
    bearing = math.atan2(goal[1] - p[1], goal[0] - p[0])
    return math.remainder(2.0 * bearing - heading, 2.0 * math.pi)


_GOAL_HEADINGS = 16


def _reach_z(z0: float, z_goal: float, length: float, grade: float) -> float:
    """Altitude closest to ``z_goal`` reachable over ``length`` at slope ``grade``."""
    dz = grade * length
    return min(z0 + dz, max(z0 - dz, z_goal))


def _goal_edges(p, heading: float, goal, radius: float, goal_radius: float, grade: float = math.inf):
    """Candidate single edges from pose ``(p, heading)`` into the goal ball.

    First the arc tangent to ``heading`` towards the goal (curvature clamped
    to the bank limit), cut at its first sample inside the ball; then the
    shortest curve onto the goal point itself with the arrival heading left
    free. Each edge ends at the altitude nearest the goal's that the climb
    slope ``grade`` allows.
    """
    dx, dy = goal[0] - p[0], goal[1] - p[1]
    chord = math.hypot(dx, dy)
    alpha = math.remainder(math.atan2(dy, dx) - heading, 2.0 * math.pi)
    kappa_max = 1.0 / radius
    if abs(alpha) > 0.5 * math.pi:
        kappa = math.copysign(kappa_max, alpha)
    else:
        kappa = max(-kappa_max, min(kappa_max, 2.0 * math.sin(alpha) / chord)) if chord > 0 else 0.0
    if kappa == 0.0:
        arc = dubins.DubinsPath(p[0], p[1], heading, radius, "LSL", (0.0, 1.0, 0.0))
        span = chord + goal_radius
    else:
        arc = dubins.DubinsPath(p[0], p[1], heading, 1.0 / abs(kappa), "LSL" if kappa > 0 else "RSR", (1.0, 0.0, 0.0))
        span = min(2.0 * math.pi / abs(kappa), 0.5 * math.pi * chord + goal_radius)
    ss = np.linspace(0.0, span, 256)
    # sample_many clamps to the path length, so lengthen the single segment first
    seg = span / arc.radius
    arc = dubins.DubinsPath(arc.x0, arc.y0, arc.heading0, arc.radius, arc.word,
                            (0.0, seg, 0.0) if kappa == 0.0 else (seg, 0.0, 0.0))
    xyh = arc.sample_many(ss)
    z = np.clip(goal[2], p[2] - grade * ss, p[2] + grade * ss)
    d = np.sqrt((xyh[:, 0] - goal[0]) ** 2 + (xyh[:, 1] - goal[1]) ** 2 + (z - goal[2]) ** 2)
    inside = np.flatnonzero(d[1:] <= goal_radius)
    if inside.size:
        i = int(inside[0]) + 1
        cut = ss[i] / arc.radius
        path = dubins.DubinsPath(arc.x0, arc.y0, arc.heading0, arc.radius, arc.word,
                                 (0.0, cut, 0.0) if kappa == 0.0 else (cut, 0.0, 0.0))
        z1 = _reach_z(float(p[2]), float(goal[2]), path.length, grade)
        yield Edge(path, float(p[2]), z1, math.hypot(path.length, z1 - p[2]))
    cands = [_arrival_heading(p, heading, goal)]
    cands += [-math.pi + 2.0 * math.pi * k / _GOAL_HEADINGS for k in range(_GOAL_HEADINGS)]
    best = None
    for h in cands:
        path = dubins.shortest_path((p[0], p[1], heading), (goal[0], goal[1], h), radius)
        if best is None or path.length < best.length:
            best = path
    z1 = _reach_z(float(p[2]), float(goal[2]), best.length, grade)
    if abs(z1 - goal[2]) <= goal_radius:
        yield Edge(best, float(p[2]), z1, math.hypot(best.length, z1 - p[2]))


def _grade(world: World) -> float:
    # a hair under the limit so rounding never trips the climb check
    return math.tan(world.limits.gamma_max) * (1.0 - 1e-9)


def _edge_end(e: Edge) -> tuple[np.ndarray, float]:
    x, y, h = e.path.sample(e.path.length)
    return np.array([x, y, e.z1]), math.remainder(h, 2.0 * math.pi)


def _is_ancestor(tree: Tree, a: int, b: int) -> bool:
    """True if node ``a`` lies on the parent chain of ``b``."""
    while b >= 0:
        if b == a:
            return True
        b = int(tree.parent[b])
    return False


def check_tree(tree: Tree, world: World, config: PlannerConfig, rtol: float = 1e-9) -> list[str]:
    """Exhaustive post-hoc audit; returns a list of violations (empty when sound).

    Every stored edge must join its parent's pose to its node's pose, and
    its cost is recomputed from scratch.
    """
    problems = []
    radius = world.limits.min_turn_radius(config.speed)
    for i in range(1, tree.n):
        p = int(tree.parent[i])
        stored = tree.edges[i]
        e = Edge(stored.path, stored.z0, stored.z1, stored.length)
        x0, y0, h0 = e.path.sample(0.0)
        x1, y1, h1 = e.path.sample(e.path.length)
        scale = max(1.0, e.length)
        start_gap = math.dist((x0, y0, e.z0), tree.pos[p])
        end_gap = math.dist((x1, y1, e.z1), tree.pos[i])
        if start_gap > 1e-6 * scale or abs(math.remainder(h0 - tree.heading[p], 2 * math.pi)) > 1e-6:
            problems.append(f"node {i}: edge does not start at parent {p}")
        if end_gap > 1e-6 * scale or abs(math.remainder(h1 - tree.heading[i], 2 * math.pi)) > 1e-6:
            problems.append(f"node {i}: edge does not end at the node")
        ec = e.cost(world.terrain, config)
        chain = sum(tree.edge_cost[k] for k in tree.path_to(i)[1:])
        if not math.isclose(tree.cost[i], chain, rel_tol=rtol, abs_tol=1e-9):
            problems.append(f"node {i}: cost {tree.cost[i]} != chain sum {chain}")
        if not math.isclose(ec, tree.edge_cost[i], rel_tol=rtol, abs_tol=1e-9):
            problems.append(f"node {i}: stored edge cost {tree.edge_cost[i]} != recomputed {ec}")
        if not _edge_free(e, world, config):
            problems.append(f"node {i}: incoming edge collides or exceeds climb limit")
        if e.path.radius < radius * (1 - 1e-12):
            problems.append(f"node {i}: turn radius below minimum")
    return problems


def densify(result: PlanResult, spacing: float) -> np.ndarray:
    """Resample a found path along its flown edges at roughly ``spacing`` metres."""
    if not result.reachable or result.tree is None:
        raise ValueError("no path to densify")
    tree = result.tree
    idx = tree.path_to(_index_of_end(result))
    pts = [tree.pos[idx[0]].copy()]
    for i in idx[1:]:
        e = tree.edges[i]
        n = max(2, int(math.ceil(e.length / spacing)) + 1)
        pts.extend(e.points(n)[1:])
    return np.array(pts)


def _index_of_end(result: PlanResult) -> int:
    tree = result.tree
    end = result.path[-1]
    d = np.sum((tree.pos[: tree.n] - end) ** 2, axis=1)
    return int(np.argmin(d))


DEFAULT_KEY_FRACTIONS = (0.95, 0.90, 0.85, 0.80, 0.75, 0.70, 0.65, 0.60, 0.55, 0.5, 0.4, 0.3, 0.2, 0.1)


class KeyPointGate:
    """Remaining-distance thresholds at which a reachability plan is run.

    Each threshold fires at most once per episode.
    """

    def __init__(self, total_distance: float, fractions: Sequence[float] = DEFAULT_KEY_FRACTIONS):
        self.key_list = sorted((f * total_distance for f in fractions), reverse=True)
        self.consumed = [False] * len(self.key_list)
        self.events = 0

    def due(self, remaining: float) -> bool:
        """Consume every newly crossed threshold; True if any was crossed."""
        fired = False
        for i, k in enumerate(self.key_list):
            if not self.consumed[i] and remaining < k:
                self.consumed[i] = True
                fired = True
        return fired


def key_point_check(
    state: AircraftState,
    p_goal,
    gate: KeyPointGate,
    world: World,
    config: PlannerConfig,
    rng: np.random.Generator,
) -> Optional[PlanResult]:
    """Run the reachability planner if a key threshold was just crossed.

    Returns None when no threshold fired or the goal is reachable; otherwise
    the failed :class:`PlanResult` whose ``fail_estimate`` is the number of
    steps still needed to cover the straight-line remaining distance.
    """
    goal = np.asarray(p_goal, dtype=np.float64)
    remaining = float(np.linalg.norm(goal - state.position))
    if not gate.due(remaining):
        return None
    gate.events += 1
    if direct_connection(state, goal, world, config):
        return None
    for _ in range(max(1, config.restarts)):
        res = plan(state.position, goal, world, config, rng, state.track_heading, state.climb_angle)
        if res.reachable:
            return None
    res.fail_estimate = math.ceil(remaining / (config.speed * config.dt))
    return res


def direct_connection(state: AircraftState, goal, world: World, config: PlannerConfig) -> bool:
    """Whether a single feasible edge reaches the goal region from ``state``."""
    goal = np.asarray(goal, dtype=np.float64)
    pos = state.position
    radius = world.limits.min_turn_radius(config.speed)
    return any(_edge_free(e, world, config) for e in _goal_edges(pos, state.track_heading, goal, radius, config.goal_radius,
                                                    _grade(world)))
