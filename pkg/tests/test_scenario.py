import math

import numpy as np
import pytest
import yaml

from tfta.errors import ConfigError
from tfta.mission import RewardConfig
from tfta.scenario import (
    Region,
    Scenario,
    TrainConfig,
    dump_scenario,
    load_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)
from tfta.terrain import generate_terrain, height_at, save_dem
from tfta.threats import MotionPattern, Threat

GEN = {"generator": {"seed": 1, "cols": 21, "rows": 21, "cell": 200.0, "relief": 300.0}}


def _scenario(**kw):
    base = dict(
        terrain=GEN,
        threats=(Threat((2000, 2000, 300), (400, 400, 600), motion=MotionPattern("circle", 300, 0.05)),),
        start=Region((500, 500), 100),
        goal=Region((3500, 3500), 100),
        reward=RewardConfig(w_r=1.0),
        seed=9,
    )
    base.update(kw)
    return Scenario(**base)


def test_yaml_round_trip(tmp_path):
    sc = _scenario()
    path = tmp_path / "s.yaml"
    save_scenario(sc, path)
    back = load_scenario(path)
    assert back == sc
    assert dump_scenario(back) == dump_scenario(sc)


def test_defaults_fill_missing_sections():
    sc = scenario_from_dict({"terrain": GEN, "start": {"center": [0, 0]}, "goal": {"center": [1, 1]}})
    assert sc.train == TrainConfig()
    assert sc.threats == ()
    assert sc.seed == 0


@pytest.mark.parametrize(
    "patch",
    [
        {"bogus": 1},
        {"reward": {"w_zz": 1.0}},
        {"threats": [{"center0": [0, 0, 0], "semi_axes": [1, 1, 1], "colour": "red"}]},
        {"threats": [{"center0": [0, 0, 0], "semi_axes": [1, 1, 1], "motion": {"kind": "circle", "speed": 2}}]},
    ],
)
def test_unknown_keys_rejected(patch):
    data = scenario_to_dict(_scenario())
    data.update(patch)
    with pytest.raises(ConfigError):
        scenario_from_dict(data)


def test_structural_errors(tmp_path):
    with pytest.raises(ConfigError):
        scenario_from_dict([1, 2])
    with pytest.raises(ConfigError):
        scenario_from_dict({"start": {"center": [0, 0]}, "goal": {"center": [1, 1]}})
    with pytest.raises(ConfigError):
        scenario_from_dict({"terrain": GEN, "start": {"center": [0, 0]}})
    with pytest.raises(ConfigError):
        Scenario(terrain={})
    with pytest.raises(ConfigError):
        Scenario(terrain={"file": "missing.csv"}, base_dir=str(tmp_path))
    with pytest.raises(ConfigError):
        load_scenario(tmp_path / "absent.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("terrain: [unclosed\n")
    with pytest.raises(ConfigError):
        load_scenario(bad)


def test_invalid_values_rejected():
    with pytest.raises(ConfigError):
        TrainConfig(eval_every=0)
    with pytest.raises(ConfigError):
        TrainConfig(workers=0)
    with pytest.raises(ConfigError):
        Region((1, 2, 3))
    with pytest.raises(ConfigError):
        Region((1, 2), -1)


def test_terrain_file_relative_to_scenario(tmp_path):
    grid = generate_terrain(2, 11, 11, 100.0, 200.0)
    save_dem(grid, tmp_path / "dem.csv")
    (tmp_path / "s.yaml").write_text(
        yaml.safe_dump({"terrain": {"file": "dem.csv"}, "start": {"center": [0, 0]}, "goal": {"center": [1, 1]}})
    )
    sc = load_scenario(tmp_path / "s.yaml")
    np.testing.assert_array_equal(sc.load_terrain().heights, grid.heights)


def test_region_sampling_inside_disc():
    rng = np.random.default_rng(0)
    reg = Region((100.0, -50.0), 250.0)
    pts = np.array([reg.sample(rng) for _ in range(5000)])
    r = np.hypot(pts[:, 0] - 100.0, pts[:, 1] + 50.0)
    assert r.max() <= 250.0
    # uniform over area: half the samples fall inside radius R/sqrt(2)
    assert np.mean(r <= 250.0 / math.sqrt(2)) == pytest.approx(0.5, abs=0.03)
    np.testing.assert_array_equal(Region((3, 4)).sample(rng), [3, 4])


def test_spawn_at_band_height():
    sc = _scenario()
    terrain = sc.load_terrain()
    start, goal = sc.spawn(terrain, np.random.default_rng(4))
    h_ref = 0.5 * (sc.reward.h_down + sc.reward.h_up)
    for p in (start, goal):
        assert p[2] == pytest.approx(height_at(terrain, p[0], p[1]) + h_ref)
    again = sc.spawn(terrain, np.random.default_rng(4))
    np.testing.assert_array_equal(again[0], start)
    np.testing.assert_array_equal(again[1], goal)


def test_make_env_overrides():
    sc = _scenario()
    env = sc.make_env(key_points=False)
    assert not env.cfg.key_points
    assert sc.mission.key_points
