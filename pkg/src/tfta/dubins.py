"""Shortest curvature-bounded paths between planar poses (Dubins curves)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

WORDS = ("LSL", "LSR", "RSL", "RSR", "RLR", "LRL")


_SNAP = 1e-6
_P2_EPS = 1e-9
_END_TOL = 1e-7


def _mod2pi(a: float) -> float:
    r = a - TWO_PI * math.floor(a / TWO_PI)
    # a segment that should be empty must not wrap to a full circle
    return 0.0 if r > TWO_PI - _SNAP else r


def _word_params(word, alpha, beta, d):
    sa, sb = math.sin(alpha), math.sin(beta)
    ca, cb = math.cos(alpha), math.cos(beta)
    c_ab = math.cos(alpha - beta)
    if word == "LSL":
        p2 = 2 + d * d - 2 * c_ab + 2 * d * (sa - sb)
        if p2 < -_P2_EPS:
            return None
        p2 = max(p2, 0.0)
        tmp = math.atan2(cb - ca, d + sa - sb)
        return _mod2pi(-alpha + tmp), math.sqrt(p2), _mod2pi(beta - tmp)
    if word == "RSR":
        p2 = 2 + d * d - 2 * c_ab + 2 * d * (sb - sa)
        if p2 < -_P2_EPS:
            return None
        p2 = max(p2, 0.0)
        tmp = math.atan2(ca - cb, d - sa + sb)
        return _mod2pi(alpha - tmp), math.sqrt(p2), _mod2pi(-beta + tmp)
    if word == "LSR":
        p2 = -2 + d * d + 2 * c_ab + 2 * d * (sa + sb)
        if p2 < -_P2_EPS:
            return None
        p2 = max(p2, 0.0)
        p = math.sqrt(p2)
        tmp = math.atan2(-ca - cb, d + sa + sb) - math.atan2(-2.0, p)
        return _mod2pi(-alpha + tmp), p, _mod2pi(-_mod2pi(beta) + tmp)
    if word == "RSL":
        p2 = d * d - 2 + 2 * c_ab - 2 * d * (sa + sb)
        if p2 < -_P2_EPS:
            return None
        p2 = max(p2, 0.0)
        p = math.sqrt(p2)
        tmp = math.atan2(ca + cb, d - sa - sb) - math.atan2(2.0, p)
        return _mod2pi(alpha - tmp), p, _mod2pi(beta - tmp)
    if word == "RLR":
        tmp = (6.0 - d * d + 2 * c_ab + 2 * d * (sa - sb)) / 8.0
        if abs(tmp) > 1:
            return None
        p = _mod2pi(TWO_PI - math.acos(tmp))
        t = _mod2pi(alpha - math.atan2(ca - cb, d - sa + sb) + p / 2.0)
        return t, p, _mod2pi(alpha - beta - t + p)
    # LRL
    tmp = (6.0 - d * d + 2 * c_ab + 2 * d * (sb - sa)) / 8.0
    if abs(tmp) > 1:
        return None
    p = _mod2pi(TWO_PI - math.acos(tmp))
    t = _mod2pi(-alpha - math.atan2(ca - cb, d + sa - sb) + p / 2.0)
    return t, p, _mod2pi(_mod2pi(beta) - alpha - t + p)


@dataclass(frozen=True)
class DubinsPath:
    x0: float
    y0: float
    heading0: float
    radius: float
    word: str
    params: tuple  # normalised segment lengths (multiply by radius for metres)

    @property
    def length(self) -> float:
        return self.radius * sum(self.params)

    def sample(self, s: float) -> tuple[float, float, float]:
        """Pose (x, y, heading) at arc length ``s`` from the start."""
        t = max(0.0, min(s, self.length)) / self.radius
        x, y, h = 0.0, 0.0, self.heading0
        for kind, seg in zip(self.word, self.params):
            step = min(t, seg)
            x, y, h = _advance(kind, x, y, h, step)
            t -= step
            if t <= 0:
                break
        return self.x0 + x * self.radius, self.y0 + y * self.radius, h

    def sample_many(self, ss) -> np.ndarray:
        """(N, 3) array of poses at the given arc lengths."""
        t = np.clip(np.asarray(ss, dtype=np.float64), 0.0, self.length) / self.radius
        x = np.zeros_like(t)
        y = np.zeros_like(t)
        h = np.full_like(t, self.heading0)
        sx, sy, sh = 0.0, 0.0, self.heading0
        start = 0.0
        for kind, seg in zip(self.word, self.params):
            local = np.clip(t - start, 0.0, seg)
            mask = t >= start
            if np.any(mask):
                xx, yy, hh = _advance_arr(kind, sx, sy, sh, local[mask])
                x[mask], y[mask], h[mask] = xx, yy, hh
            sx, sy, sh = _advance(kind, sx, sy, sh, seg)
            start += seg
        return np.column_stack([self.x0 + x * self.radius, self.y0 + y * self.radius, h])

    def max_turn(self) -> float:
        """Largest heading change on a single turning segment."""
        return max((p for k, p in zip(self.word, self.params) if k != "S"), default=0.0)


def _advance(kind, x, y, h, t):
    if kind == "L":
        return x + math.sin(h + t) - math.sin(h), y - math.cos(h + t) + math.cos(h), h + t
    if kind == "R":
        return x - math.sin(h - t) + math.sin(h), y + math.cos(h - t) - math.cos(h), h - t
    return x + t * math.cos(h), y + t * math.sin(h), h


def _advance_arr(kind, x, y, h, t):
    if kind == "L":
        return x + np.sin(h + t) - math.sin(h), y - np.cos(h + t) + math.cos(h), h + t
    if kind == "R":
        return x - np.sin(h - t) + math.sin(h), y + np.cos(h - t) - math.cos(h), h - t
    return x + t * math.cos(h), y + t * math.sin(h), h + 0.0 * t


def shortest_path(start, end, radius: float) -> DubinsPath:
    """Shortest path from pose ``start`` to pose ``end`` (each ``(x, y, heading)``)."""
    dx = end[0] - start[0]
    dy = end[1] - start[1]
    d = math.hypot(dx, dy) / radius
    theta = _mod2pi(math.atan2(dy, dx)) if d > 0 else 0.0
    alpha = _mod2pi(start[2] - theta)
    beta = _mod2pi(end[2] - theta)
    cands = []
    for word in WORDS:
        prm = _word_params(word, alpha, beta, d)
        if prm is not None:
            cands.append((sum(prm), word, prm))
    cands.sort(key=lambda c: c[0])
    # a clamped near-zero straight can miss the end pose; take the shortest word that lands
    tol = _END_TOL * radius * max(1.0, d) + 1e-6
    fallback = None
    for _, word, prm in cands:
        path = DubinsPath(float(start[0]), float(start[1]), float(start[2]), radius, word, prm)
        x, y, h = path.sample(path.length)
        miss = max(math.hypot(x - end[0], y - end[1]), radius * abs(math.remainder(h - end[2], TWO_PI)))
        if miss <= tol:
            return path
        if fallback is None or miss < fallback[0]:
            fallback = (miss, path)
    return fallback[1]
