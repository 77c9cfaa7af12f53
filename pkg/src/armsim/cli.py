"""``armsim`` command line: run, batch, verify-invariant, emit-plots.

Exit codes: 0 success, 2 configuration error, 3 run-time failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .geometry_sets import EmptyTighteningError, invariant_grid, write_grid_csv
from .sim_harness import (ConfigError, batch, builtin_scenario, emit_plots, load_scenario, metrics_to_json, read_log_csv, run,
                          write_batch_csv, write_log_csv, write_obstacle_csv)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _seeds(text: str) -> range:
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a), int(b)
        else:
            lo = hi = int(text)
    except ValueError:
        raise ConfigError(f"bad seed range {text!r}, expected a..b") from None
    if lo < 0 or hi < lo:
        raise ConfigError(f"bad seed range {text!r}")
    return range(lo, hi + 1)


def _scenario(ref: str):
    # a bare name such as "default_dynamic" picks a shipped scenario
    if not Path(ref).exists() and Path(ref).suffix == "" and "/" not in ref:
        try:
            return builtin_scenario(ref)
        except FileNotFoundError:
            raise ConfigError(f"no scenario file or built-in scenario named {ref!r}") from None
    return load_scenario(ref)


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    sc = _scenario(args.scenario)
    if args.controller not in ("rmpc", "baseline"):
        raise ConfigError(f"unknown controller {args.controller!r}")
    metrics, log = run(sc, args.controller, args.seed)
    out = _out_dir(args.out)
    write_log_csv(log, out / "trajectory.csv")
    write_obstacle_csv(log, out / "obstacles.csv")
    (out / "metrics.json").write_text(metrics_to_json(metrics) + "\n")
    print(f"{sc.name} {args.controller} seed={args.seed}: completion {metrics.completion_time:.2f} s, "
          f"collisions {metrics.collision_count}, switches {metrics.mode_switches}")
    return EXIT_OK


def cmd_batch(args) -> int:
    sc = _scenario(args.scenario)
    controllers = tuple(c.strip() for c in args.controllers.split(",") if c.strip())
    bad = [c for c in controllers if c not in ("rmpc", "baseline")]
    if bad or not controllers:
        raise ConfigError(f"unknown controllers {bad}")
    table, per_run, failures = batch(sc, controllers, _seeds(args.seeds), workers=args.workers)
    out = _out_dir(args.out)
    write_batch_csv(table, out / "summary.csv")
    runs = {c: {str(s): json.loads(metrics_to_json(m)) for s, m in per_run[c].items()} for c in controllers}
    (out / "runs.json").write_text(json.dumps(runs, indent=1) + "\n")
    for c in controllers:
        t = table[c].get("completion_time")
        med = f"{t['median']:.2f}" if t else "n/a"
        print(f"{c}: runs {table[c]['runs']}, median completion {med} s, win rate {table[c]['win_rate']:.2f}")
    for c, s, err in failures:
        print(f"FAILED {c} seed {s}: {err}", file=sys.stderr)
    return EXIT_RUNTIME if failures else EXIT_OK


def cmd_verify(args) -> int:
    sc = _scenario(args.scenario)
    if args.grid < 2:
        raise ConfigError("--grid must be at least 2")
    rows = invariant_grid(sc, args.grid, zfloor=args.zfloor)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_grid_csv(rows, out)
    members = sum(1 for r in rows if r[4] == 1)
    unknown = sum(1 for r in rows if r[4] == "unknown")
    print(f"{members}/{len(rows)} grid nodes robustly feasible, {unknown} undecided")
    return EXIT_OK


def cmd_plots(args) -> int:
    log = read_log_csv(args.log)
    for p in emit_plots(log, args.out):
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="armsim", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one seeded run")
    p.add_argument("--scenario", required=True, help="JSON path or built-in name")
    p.add_argument("--controller", default="rmpc")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="Monte-Carlo comparison over a seed range")
    p.add_argument("--scenario", required=True, help="JSON path or built-in name")
    p.add_argument("--controllers", default="rmpc,baseline")
    p.add_argument("--seeds", default="0..9", help="inclusive range a..b")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("verify-invariant", help="robust-feasibility grid over joint space")
    p.add_argument("--scenario", required=True, help="JSON path or built-in name")
    p.add_argument("--grid", type=int, default=5)
    p.add_argument("--zfloor", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("emit-plots", help="plot-ready CSVs from a trajectory log")
    p.add_argument("--log", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plots)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, EmptyTighteningError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # anything past validation is a run-time failure
        print(f"run-time failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
