"""Scenario files: one YAML document fixes terrain, threats, spawn regions,
every sub-config and the seed of a run."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .dynamics import KinematicLimits
from .errors import ConfigError
from .flowfield import FieldConfig
from .mission import Env, MissionConfig, RewardConfig
from .ppo import PpoConfig
from .terrain import TerrainGrid, generate_terrain, height_at, load_dem
from .threats import MotionPattern, Threat


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 3000
    eval_every: int = 10
    eval_episodes: int = 10
    checkpoint_every: int = 0
    workers: int = 1
    # fixed spawn points for evaluation come from this seed
    eval_seed: int = 12345

    def __post_init__(self):
        if self.episodes < 0 or self.eval_every < 1 or self.eval_episodes < 1:
            raise ConfigError("invalid training schedule")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


@dataclass(frozen=True)
class Region:
    center: tuple
    radius: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) != 2:
            raise ConfigError("region center is (x, y)")
        if self.radius < 0:
            raise ConfigError("region radius must be non-negative")

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        if self.radius == 0:
            return np.array(self.center)
        r = self.radius * math.sqrt(rng.random())
        a = rng.uniform(-math.pi, math.pi)
        return np.array([self.center[0] + r * math.cos(a), self.center[1] + r * math.sin(a)])


@dataclass(frozen=True)
class Scenario:
    terrain: dict
    threats: tuple = ()
    start: Region = Region((0.0, 0.0))
    goal: Region = Region((0.0, 0.0))
    limits: KinematicLimits = KinematicLimits()
    field: FieldConfig = FieldConfig()
    reward: RewardConfig = RewardConfig()
    ppo: PpoConfig = PpoConfig()
    mission: MissionConfig = MissionConfig()
    train: TrainConfig = TrainConfig()
    seed: int = 0
    base_dir: str = dataclasses.field(default=".", compare=False)

    def __post_init__(self):
        t = self.terrain
        if ("file" in t) == ("generator" in t):
            raise ConfigError("terrain needs exactly one of 'file' or 'generator'")
        if "file" in t and not (Path(self.base_dir) / t["file"]).exists():
            raise ConfigError(f"terrain file {t['file']!r} not found")

    def load_terrain(self) -> TerrainGrid:
        if "file" in self.terrain:
            return load_dem(Path(self.base_dir) / self.terrain["file"])
        g = self.terrain["generator"]
        return generate_terrain(int(g["seed"]), int(g["cols"]), int(g["rows"]), float(g["cell"]), float(g["relief"]))

    def make_env(self, terrain: Optional[TerrainGrid] = None, **mission_overrides) -> Env:
        mission = dataclasses.replace(self.mission, **mission_overrides) if mission_overrides else self.mission
        return Env(terrain if terrain is not None else self.load_terrain(), self.threats, self.limits,
                   self.field, self.reward, mission)

    def spawn(self, terrain: TerrainGrid, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Start and goal at the mid-band height above the terrain."""
        h_ref = 0.5 * (self.reward.h_down + self.reward.h_up)
        out = []
        for region in (self.start, self.goal):
            xy = region.sample(rng)
            out.append(np.array([xy[0], xy[1], height_at(terrain, xy[0], xy[1]) + h_ref]))
        return out[0], out[1]


# -- YAML mapping -----------------------------------------------------------

_SECTIONS = {
    "limits": KinematicLimits,
    "field": FieldConfig,
    "reward": RewardConfig,
    "ppo": PpoConfig,
    "mission": MissionConfig,
    "train": TrainConfig,
}


def _build(cls, data, where):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kw = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**kw)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _threat(d: dict, i: int) -> Threat:
    d = dict(d)
    motion = _build(MotionPattern, d.pop("motion", None), f"threats[{i}].motion")
    t = _build(Threat, d, f"threats[{i}]")
    return dataclasses.replace(t, motion=motion)


def scenario_from_dict(data: dict, base_dir=".") -> Scenario:
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a mapping")
    known = {"terrain", "threats", "start", "goal", "seed", *_SECTIONS}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown scenario keys {sorted(unknown)}")
    if "terrain" not in data:
        raise ConfigError("scenario needs a terrain section")
    kw = {name: _build(cls, data.get(name), name) for name, cls in _SECTIONS.items()}
    threats = tuple(_threat(t, i) for i, t in enumerate(data.get("threats") or []))
    if not data.get("start") or not data.get("goal"):
        raise ConfigError("scenario needs start and goal regions")
    start = _build(Region, data["start"], "start")
    goal = _build(Region, data["goal"], "goal")
    return Scenario(
        terrain=dict(data["terrain"]),
        threats=threats,
        start=start,
        goal=goal,
        seed=int(data.get("seed", 0)),
        base_dir=str(base_dir),
        **kw,
    )


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def scenario_to_dict(sc: Scenario) -> dict:
    out = {"seed": sc.seed, "terrain": _plain(sc.terrain)}
    out["threats"] = [_plain(t) for t in sc.threats]
    out["start"] = _plain(sc.start)
    out["goal"] = _plain(sc.goal)
    for name in _SECTIONS:
        out[name] = _plain(getattr(sc, name))
    return out


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from None
    return scenario_from_dict(data, path.parent)


def dump_scenario(sc: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(sc), sort_keys=False)


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(dump_scenario(sc))
