"""Command line entry point: ``vecgr <verb> [options]``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiment as ex
from . import geoplanner, gridmap, quintic, sim, strips, viaopt
from .errors import ConfigError, VecGRError
from .recognizer import HypothesisBank, Observation, Recognizer, format_history_csv


def _xy(text):
    try:
        x, y = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}") from None
    return x, y


def _fractions(text):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None


def _emit(text, out=None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _planner_cfg(args, clearance=None):
    return geoplanner.PlannerConfig(time_limit=args.time_limit, rng_seed=args.seed,
                                    clearance=args.clearance if clearance is None else clearance,
                                    max_iterations=args.iterations)


# ---------------------------------------------------------------- verbs

def cmd_map_info(args):
    grid = gridmap.load_map(args.map)
    info = {"width": grid.width, "height": grid.height,
            "meters_per_cell": grid.meters_per_cell,
            "obstacle_cells": grid.obstacle_count,
            "free_fraction": round(grid.free_fraction, 6)}
    _emit(json.dumps(info, indent=2) + "\n", args.out)


def cmd_sample_points(args):
    grid = gridmap.load_map(args.map)
    pts = gridmap.sample_scenario_points(grid, args.count, args.seed)
    _emit(gridmap.format_scenario(pts), args.out)


def cmd_plan(args):
    grid = gridmap.load_map(args.map)
    path = geoplanner.plan(grid, args.start, args.goal, _planner_cfg(args))
    if not args.no_simplify:
        path = geoplanner.simplify(path, grid, args.clearance)
    _emit(geoplanner.format_path_csv(path), args.out)


def _bank_continuous(args):
    grid = gridmap.load_map(args.map)
    if args.scenario:
        pts = gridmap.load_scenario(args.scenario)
    else:
        pts = gridmap.sample_scenario_points(grid, args.points, args.seed)
    cfg = ex.ExperimentConfig(k=args.k, seed=args.seed, v_max=args.vmax,
                              planner_iterations=args.iterations, time_limit=args.time_limit,
                              simplify=not args.no_simplify)
    bank, goal_ids, pc, elapsed = ex.build_continuous_bank(grid, pts, args.start_index, cfg)
    return {"mode": "continuous", "dt": quintic.STANDARD_DT, "start": list(pts[args.start_index].xy),
            "goals": [list(pts[j].xy) for j in goal_ids], "goal_ids": goal_ids,
            "planner_calls": pc, "offline_s": elapsed,
            "trajectories": [[m.states.tolist() for m in ms] for ms in bank.trajectories]}


def _load_discrete(args):
    if not (args.domain and args.problem and args.hypotheses):
        raise ConfigError("discrete mode needs --domain, --problem and --hypotheses")
    problem = strips.load_problem(args.domain, args.problem)
    goals = strips.parse_hypotheses(Path(args.hypotheses).read_text(), problem)
    if not goals:
        raise ConfigError("empty hypothesis set")
    return problem, goals


def _bank_discrete(args):
    problem, goals = _load_discrete(args)
    bank, pc, elapsed = ex.build_discrete_bank(problem, goals, args.k, args.optimal_only)
    return {"mode": "discrete",
            "goals": [[strips.format_atom(f) for f in sorted(g)] for g in goals],
            "planner_calls": pc, "offline_s": elapsed,
            "trajectories": [[[[strips.format_atom(f) for f in sorted(s)] for s in m.states]
                              for m in ms] for ms in bank.trajectories]}


def cmd_bank_build(args):
    data = _bank_discrete(args) if args.domain else _bank_continuous(args)
    _emit(json.dumps(data) + "\n", args.out)


def load_bank(path) -> HypothesisBank:
    data = json.loads(Path(path).read_text())
    if data.get("mode") == "discrete":
        trajs = tuple(tuple(strips.StateTrajectory(tuple(
            frozenset(strips.parse_atom(f) for f in s) for s in m)) for m in ms)
            for ms in data["trajectories"])
        goals = tuple(" ".join(g) for g in data["goals"])
    else:
        dt = data.get("dt", quintic.STANDARD_DT)
        trajs = tuple(tuple(quintic.Trajectory(m, dt) for m in ms) for ms in data["trajectories"])
        goals = tuple(data.get("goal_ids", range(len(trajs))))
    return HypothesisBank(goals, trajs)


def cmd_simulate(args):
    grid = gridmap.load_map(args.map)
    if args.path:
        path = geoplanner.parse_path_csv(Path(args.path).read_text())
    elif args.start and args.goal:
        path = geoplanner.plan(grid, args.start, args.goal, _planner_cfg(args, clearance=0.1))
        path = geoplanner.simplify(path, grid, 0.1)
    else:
        raise ConfigError("simulate needs --path or both --start and --goal")
    cfg = sim.FollowerConfig(v_max=args.vmax, initial_theta=args.theta)
    stream = sim.follow_path(grid, path, cfg)
    _emit(sim.format_stream_csv(stream, ["ground_truth=pure-pursuit unicycle"]), args.out)


def cmd_recognize(args):
    if args.domain:
        problem, goals = _load_discrete(args)
        if not args.observations:
            raise ConfigError("--observations is required")
        actions = strips.parse_observations(Path(args.observations).read_text(), problem)
        bank, _, _ = ex.build_discrete_bank(problem, goals, args.k, args.optimal_only)
        states = strips.observed_states(problem, actions)
        obs = [Observation(s, i) for i, s in enumerate(states, 1)]
        labels = [" ".join(strips.format_atom(f) for f in sorted(g)) for g in goals]
    else:
        if not (args.bank and args.observations):
            raise ConfigError("continuous recognition needs --bank and --observations")
        bank = load_bank(args.bank)
        stream = sim.load_stream(args.observations)
        obs = stream.test_points if not args.all_samples else [
            Observation(s, s.t) for s in stream.full.samples[1:]]
        labels = list(bank.goals)
    rec = Recognizer(bank)
    for o in obs:
        rec.update(o)
    text = format_history_csv(rec.history, [str(g).replace(",", ";") for g in labels])
    _emit(text, args.out)
    final = rec.history[-1] if rec.history else None
    if final is not None:
        print(f"# argmax={labels[final.argmax]} p={final.probabilities[final.argmax]:.6f} "
              f"spread={final.spread}", file=sys.stderr)


def cmd_experiment_continuous(args):
    cfg = ex.ExperimentConfig(mode="continuous", map_path=args.map, scenario_path=args.scenario,
                              n_points=args.points, k=args.k, seed=args.seed, v_max=args.vmax,
                              planner_iterations=args.iterations, time_limit=args.time_limit,
                              simplify=not args.no_simplify, timing_repeats=args.repeats,
                              max_problems=args.max_problems)
    result = ex.run_continuous_experiment(cfg)
    _write(result, args)


def cmd_experiment_discrete(args):
    problems = tuple(args.problem or ())
    cfg = ex.ExperimentConfig(mode="discrete", domain_path=args.domain, problem_paths=problems,
                              hypotheses_path=args.hypotheses,
                              observations_path=args.observations, k=args.k,
                              fractions=args.fractions, optimal_only=args.optimal_only,
                              timing_repeats=args.repeats, max_problems=args.max_problems)
    result = ex.run_discrete_experiment(cfg)
    _write(result, args)


def _write(result, args):
    if args.out:
        ex.write_result(result, args.out, args.points_out, args.mask_timing)
    else:
        sys.stdout.write(ex.format_rows_csv(result.rows, args.mask_timing))
        if args.points_out:
            Path(args.points_out).write_text(ex.format_points_csv(result.points))
    if result.online_planner_calls:
        print(f"warning: {result.online_planner_calls} planner calls in the online phase",
              file=sys.stderr)


def cmd_report(args):
    rows = ex.read_rows_csv(Path(args.input).read_text())
    summary = ex.summarize(rows, group_by_fraction=args.by_fraction)
    if args.out and Path(args.out).suffix.lower() == ".json":
        _emit(json.dumps(summary, indent=2, sort_keys=True) + "\n", args.out)
        return
    lines = ["group,problems,failed,ppv,ppv_std,acc,acc_std,spr,pc,online_s,offline_s"]
    for key, e in summary.items():
        vals = [e[c] for c in ("ppv", "ppv_std", "acc", "acc_std", "spr", "pc",
                               "online_s", "offline_s")]
        lines.append(",".join([key, str(e["problems"]), str(e["failed"])]
                              + ["" if v is None else f"{v:.6g}" for v in vals]))
    _emit("\n".join(lines) + "\n", args.out)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vecgr", description="Online goal recognition with "
                                 "precomputed trajectory banks.")
    sub = ap.add_subparsers(dest="verb", required=True)

    def common(p, planning=False):
        p.add_argument("--out", help="output file; a .json suffix selects JSON where supported")
        p.add_argument("--seed", type=int, default=0)
        if planning:
            p.add_argument("--iterations", type=int, default=1500,
                           help="planner iteration budget (deterministic); 0 uses --time-limit")
            p.add_argument("--time-limit", type=float, default=5.0)
            p.add_argument("--clearance", type=float, default=geoplanner.WALL_LIM)
            p.add_argument("--no-simplify", action="store_true")
            p.add_argument("--vmax", type=float, default=1.0)

    def discrete(p, many=False):
        p.add_argument("--domain")
        p.add_argument("--problem", action="append" if many else "store",
                       help="problem file or directory" + (" (repeatable)" if many else ""))
        p.add_argument("--hypotheses")
        p.add_argument("--observations")
        p.add_argument("--optimal-only", action="store_true")

    p = sub.add_parser("map-info", help="summarise a .map file")
    p.add_argument("--map", required=True)
    common(p)
    p.set_defaults(func=cmd_map_info)

    p = sub.add_parser("sample-points", help="sample scenario points")
    p.add_argument("--map", required=True)
    p.add_argument("--count", type=int, default=8)
    common(p)
    p.set_defaults(func=cmd_sample_points)

    p = sub.add_parser("plan", help="RRT* path between two positions")
    p.add_argument("--map", required=True)
    p.add_argument("--start", type=_xy, required=True)
    p.add_argument("--goal", type=_xy, required=True)
    common(p, planning=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("bank-build", help="precompute a hypothesis bank (JSON)")
    p.add_argument("--map")
    p.add_argument("--scenario")
    p.add_argument("--points", type=int, default=8)
    p.add_argument("--start-index", type=int, default=0)
    p.add_argument("--k", type=int, default=1)
    common(p, planning=True)
    discrete(p)
    p.set_defaults(func=cmd_bank_build)

    p = sub.add_parser("simulate", help="ground-truth observation stream")
    p.add_argument("--map", required=True)
    p.add_argument("--path", help="path CSV to follow")
    p.add_argument("--start", type=_xy)
    p.add_argument("--goal", type=_xy)
    p.add_argument("--theta", type=float)
    common(p, planning=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("recognize", help="posterior history for an observation stream")
    p.add_argument("--bank", help="bank JSON (continuous)")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--all-samples", action="store_true",
                   help="use every stream sample instead of the six test points")
    common(p)
    discrete(p)
    p.set_defaults(func=cmd_recognize)

    p = sub.add_parser("experiment-continuous", help="all ordered scenario-point pairs")
    p.add_argument("--map", required=True)
    p.add_argument("--scenario")
    p.add_argument("--points", type=int, default=8)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--max-problems", type=int)
    p.add_argument("--points-out", help="per observation point CSV")
    p.add_argument("--mask-timing", action="store_true",
                   help="write '-' in the timing columns (for reproducible output)")
    common(p, planning=True)
    p.set_defaults(func=cmd_experiment_continuous)

    p = sub.add_parser("experiment-discrete", help="top-k banks over observation fractions")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--fractions", type=_fractions, default=ex.DEFAULT_FRACTIONS)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--max-problems", type=int)
    p.add_argument("--points-out")
    p.add_argument("--mask-timing", action="store_true")
    common(p)
    discrete(p, many=True)
    p.set_defaults(func=cmd_experiment_discrete)

    p = sub.add_parser("report", help="aggregate a results CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--by-fraction", action="store_true")
    common(p)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "iterations", None) == 0:
        args.iterations = None
    try:
        args.func(args)
    except (VecGRError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
