"""Command-line front end: gen-terrain, train, plan and bench."""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .errors import ConfigError, ModelFormatError, TftaError
from .mission import STATE_DIM, metrics
from .ppo import ActorCritic, load_model, save_model
from .scenario import load_scenario
from .terrain import generate_terrain, save_dem
from .training import BENCH_ARMS, LOG_HEADER, bench, episode_rng, run_episode, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

# wall-clock fields: printed, never written, so output files stay seed-deterministic
TIMING_KEYS = ("latency_p50_ms", "latency_p99_ms")


def _write_yaml(data, path) -> None:
    Path(path).write_text(yaml.safe_dump(data, sort_keys=False))


def _finite(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _load_policy(path) -> ActorCritic:
    ac = load_model(path)
    if ac.actor.weights[0].shape[0] != STATE_DIM:
        raise ModelFormatError(
            f"model expects {ac.actor.weights[0].shape[0]} state inputs, environment provides {STATE_DIM}"
        )
    return ac


def cmd_gen_terrain(args) -> int:
    grid = generate_terrain(args.seed, args.cols, args.rows, args.cell, args.relief)
    save_dem(grid, args.out)
    print(f"wrote {args.out}: {grid.n_cols}x{grid.n_rows} cells of {grid.cell_size:g} m, "
          f"heights {grid.heights.min():.1f}..{grid.heights.max():.1f} m")
    return EXIT_OK


def cmd_train(args) -> int:
    sc = load_scenario(args.scenario)
    seed = sc.seed if args.seed is None else args.seed
    log_path = Path(args.log) if args.log else Path(args.out).with_suffix(".log.csv")
    if args.checkpoint_every is not None:
        import dataclasses

        sc = dataclasses.replace(sc, train=dataclasses.replace(sc.train, checkpoint_every=args.checkpoint_every))

    with open(log_path, "w") as log:
        log.write(LOG_HEADER + "\n")

        def on_log(row):
            log.write(row.line() + "\n")
            log.flush()
            if not args.quiet:
                print(row.line(), flush=True)

        def on_checkpoint(ac, ep):
            save_model(ac, f"{args.out}.ep{ep}")

        result = train(
            sc,
            episodes=args.episodes,
            seed=seed,
            key_points=not args.no_keypoints,
            workers=args.workers,
            on_log=on_log,
            on_checkpoint=on_checkpoint,
        )
    save_model(result.ac, args.out)
    if result.aborted:
        print(f"training aborted after {result.episodes_run} episodes: {result.message}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {args.out} after {result.episodes_run} episodes; log {log_path}")
    return EXIT_OK


def cmd_plan(args) -> int:
    sc = load_scenario(args.scenario)
    ac = _load_policy(args.model)
    seed = sc.seed if args.seed is None else args.seed
    terrain = sc.load_terrain()
    env = sc.make_env(terrain, key_points=False)
    rng = episode_rng(seed, 5, 0)
    start, goal = sc.spawn(terrain, rng)
    rec, _ = run_episode(env, start, goal, rng, ac, greedy=True)
    rec.write_csv(args.out)
    m = metrics(rec, start, sc.limits, sc.field.cruise_speed) if len(rec.rows) >= 2 else {"outcome": rec.outcome}
    timing = {k: m.pop(k) for k in TIMING_KEYS if k in m}
    m = {k: _finite(v) for k, v in m.items()}
    metrics_path = args.metrics or str(Path(args.out).with_suffix(".metrics.yaml"))
    _write_yaml(m, metrics_path)
    print(f"outcome {rec.outcome} after {len(rec.rows)} steps; wrote {args.out} and {metrics_path}")
    if timing:
        print(f"decision latency p50 {timing['latency_p50_ms']:.3f} ms, p99 {timing['latency_p99_ms']:.3f} ms")
    return EXIT_OK


BENCH_COLUMNS = ("path_length_m", "max_climb_deg", "smoothness", "min_threat_distance_m")


def _summarise(rows: list[dict], arms) -> dict:
    out = {}
    for arm in arms:
        mine = [r for r in rows if r["arm"] == arm]
        summary = {"episodes": len(mine), "success_rate": sum(r.get("outcome") == "goal" for r in mine) / max(1, len(mine))}
        for col in BENCH_COLUMNS:
            vals = [r[col] for r in mine if r.get(col) is not None and math.isfinite(r[col])]
            summary[col] = float(np.mean(vals)) if vals else None
        out[arm] = summary
    return out


def cmd_bench(args) -> int:
    sc = load_scenario(args.scenario)
    arms = tuple(args.arms.split(",")) if args.arms else BENCH_ARMS
    unknown = set(arms) - set(BENCH_ARMS)
    if unknown:
        raise ConfigError(f"unknown arms {sorted(unknown)}")
    ac = _load_policy(args.model) if "rfppo" in arms else None
    seed = sc.seed if args.seed is None else args.seed
    rows = bench(sc, ac, seed, args.episodes, arms, ifds_beta=args.ifds_beta, rrt_iters=args.rrt_iters)
    for r in rows:
        for k in TIMING_KEYS:
            r.pop(k, None)
    report = {
        "seed": seed,
        "ifds_beta": args.ifds_beta,
        "rrt_iters": args.rrt_iters,
        "summary": _summarise(rows, arms),
        "rows": [{k: _finite(v) for k, v in r.items()} for r in rows],
    }
    _write_yaml(report, args.out)
    print(f"{'arm':<8}{'success':>9}" + "".join(f"{c:>24}" for c in BENCH_COLUMNS))
    for arm, s in report["summary"].items():
        cells = "".join(f"{'-' if s[c] is None else format(s[c], '.4g'):>24}" for c in BENCH_COLUMNS)
        print(f"{arm:<8}{s['success_rate']:>9.2f}{cells}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tfta", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-terrain", help="write a seeded synthetic DEM")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--cols", type=int, required=True)
    g.add_argument("--rows", type=int, required=True)
    g.add_argument("--cell", type=float, required=True, help="cell size in metres")
    g.add_argument("--relief", type=float, required=True, help="peak-to-trough height in metres")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_terrain)

    t = sub.add_parser("train", help="train the field-parameter policy")
    t.add_argument("--scenario", required=True)
    t.add_argument("--out", required=True, help="model file")
    t.add_argument("--log", help="training log (default: <out>.log.csv)")
    t.add_argument("--episodes", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--workers", type=int)
    t.add_argument("--checkpoint-every", type=int)
    t.add_argument("--no-keypoints", action="store_true", help="disable key-point reachability checks")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    pl = sub.add_parser("plan", help="fly one greedy episode and write trajectory and metrics")
    pl.add_argument("--scenario", required=True)
    pl.add_argument("--model", required=True)
    pl.add_argument("--out", required=True, help="trajectory CSV")
    pl.add_argument("--metrics", help="metrics file (default: <out>.metrics.yaml)")
    pl.add_argument("--seed", type=int)
    pl.set_defaults(func=cmd_plan)

    b = sub.add_parser("bench", help="compare learned, fixed-parameter and RRT* arms")
    b.add_argument("--scenario", required=True)
    b.add_argument("--model", help="model file for the rfppo arm")
    b.add_argument("--out", required=True, help="report file")
    b.add_argument("--episodes", type=int, default=10)
    b.add_argument("--seed", type=int)
    b.add_argument("--ifds-beta", type=float, default=0.3)
    b.add_argument("--rrt-iters", type=int, default=1500, help="planner iterations for the rrt arm")
    b.add_argument("--arms", help=f"comma-separated subset of {','.join(BENCH_ARMS)}")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "bench" and args.model is None and (args.arms is None or "rfppo" in args.arms):
        print("error: bench needs --model for the rfppo arm", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, ModelFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TftaError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
