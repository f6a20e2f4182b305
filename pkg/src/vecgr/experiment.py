"""Offline bank construction, online recognition and PPV/ACC/SPR/PC metrics.

Metric conventions, per observation point with argmax tie set ``T`` and ``|G|``
hypotheses:

* PPV: ``1/|T|`` if the true goal is in ``T`` else 0.
* ACC: fraction of the ``|G|`` binary goal decisions that are right.  Goals in
  ``T`` are predicted positive; the true goal is the only actual positive.
* SPR: ``|T|``.

Each is averaged over the observation points of a problem (PPV and ACC in
percent).  PC is the planner-call count read from instrumentation while the
problem's bank is built.
"""
from __future__ import annotations

import csv
import io
import json
import math
import statistics
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import counters, geoplanner, gridmap, quintic, sim, strips, viaopt
from .errors import ConfigError, VecGRError
from .recognizer import HypothesisBank, Observation, Recognizer

CSV_COLUMNS = ("problem", "ppv", "acc", "spr", "pc", "online_s", "offline_s", "failed")
POINT_COLUMNS = ("problem", "point", "t", "true_goal", "argmax", "spread", "p_true")
DEFAULT_FRACTIONS = (0.3, 0.5, 0.7, 1.0)
TIMING_COLUMNS = ("online_s", "offline_s")


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "continuous"
    map_path: str | None = None
    scenario_path: str | None = None
    n_points: int = 8
    domain_path: str | None = None
    problem_paths: tuple = ()
    hypotheses_path: str | None = None
    observations_path: str | None = None
    k: int = 1
    seed: int = 0
    v_max: float = 1.0
    fractions: tuple = DEFAULT_FRACTIONS
    optimal_only: bool = False
    # offline planning; an iteration budget keeps runs reproducible
    planner_iterations: int | None = 1500
    time_limit: float = 5.0
    bank_clearance: float = geoplanner.WALL_LIM
    simplify: bool = True
    via_spacing: float | None = 1.0  # re-insert via points along the simplified path
    # ground truth generation
    gt_clearance: float = 0.1
    gt_planner_iterations: int = 3000
    gt_planner_seed_offset: int = 1_000_003
    timing_repeats: int = 5
    max_problems: int | None = None

    def __post_init__(self):
        if self.mode not in ("continuous", "discrete"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.k < 1:
            raise ConfigError("k must be at least 1")
        if not self.fractions or any(not 0 < f <= 1 for f in self.fractions):
            raise ConfigError("fractions must lie in (0, 1]")
        if not self.v_max > 0:
            raise ConfigError("v_max must be positive")
        if self.timing_repeats < 1:
            raise ConfigError("timing_repeats must be at least 1")

    def planner_config(self, seed: int, clearance: float | None = None,
                       iterations: int | None = None) -> geoplanner.PlannerConfig:
        return geoplanner.PlannerConfig(
            time_limit=self.time_limit,
            clearance=self.bank_clearance if clearance is None else clearance,
            rng_seed=seed,
            max_iterations=self.planner_iterations if iterations is None else iterations)


@dataclass
class MetricsRow:
    problem: str
    ppv: float
    acc: float
    spr: float
    pc: int
    online_s: float = 0.0
    offline_s: float = 0.0
    failed: bool = False
    error: str = ""

    def __post_init__(self):
        if not self.failed:
            if not (0 <= self.ppv <= 100 and 0 <= self.acc <= 100):
                raise ValueError("PPV and ACC must lie in [0, 100]")
            if self.spr < 1 or self.pc < 0:
                raise ValueError("SPR must be >= 1 and PC >= 0")

    @classmethod
    def failure(cls, problem, pc=0, offline_s=0.0, error=""):
        return cls(problem, math.nan, math.nan, math.nan, pc, math.nan, offline_s, True, error)


@dataclass
class PointRecord:
    problem: str
    point: int
    t: int
    true_goal: int
    argmax: int
    spread: int
    p_true: float


@dataclass
class ExperimentResult:
    rows: list
    points: list = field(default_factory=list)
    online_planner_calls: int = 0
    metadata: dict = field(default_factory=dict)


# ---------------------------------------------------------------- metrics

def point_scores(tie_set, true_goal: int, n_goals: int) -> tuple[float, float, int]:
    """(ppv, acc, spread) of one observation point, ppv and acc as fractions."""
    ties = set(tie_set)
    hit = true_goal in ties
    ppv = 1.0 / len(ties) if hit else 0.0
    false_pos = len(ties) - (1 if hit else 0)
    false_neg = 0 if hit else 1
    acc = (n_goals - false_pos - false_neg) / n_goals
    return ppv, acc, len(ties)


def compute_metrics(posteriors, true_goal: int, problem: str = "", pc: int = 0,
                    online_s: float = 0.0, offline_s: float = 0.0) -> MetricsRow:
    if len(posteriors) == 0:
        raise ValueError("need at least one observation point")
    n_goals = len(posteriors[0].probabilities)
    scores = [point_scores(p.tie_set, true_goal, n_goals) for p in posteriors]
    ppv = 100.0 * sum(s[0] for s in scores) / len(scores)
    acc = 100.0 * sum(s[1] for s in scores) / len(scores)
    spr = sum(s[2] for s in scores) / len(scores)
    return MetricsRow(problem, ppv, acc, spr, pc, online_s, offline_s)


# ---------------------------------------------------------------- online phase

def run_online(bank: HypothesisBank, observations, repeats: int = 5):
    """Fold observations into a fresh recognizer; return (posteriors, median seconds).

    The time covers the update calls only.  The planner-call counter must not
    move while this runs.
    """
    rec = Recognizer(bank)
    before = counters.planner_calls()
    durations = []
    history = []
    for _ in range(repeats):
        rec.reset()
        elapsed = 0.0
        for obs in observations:
            t0 = time.perf_counter()
            rec.update(obs)
            elapsed += time.perf_counter() - t0
        durations.append(elapsed)
        history = list(rec.history)
    calls = counters.planner_calls() - before
    return history, statistics.median(durations), calls


# ---------------------------------------------------------------- continuous

def build_continuous_entry(grid, start, goal, cfg: ExperimentConfig, seed: int):
    """k trajectories from ``start`` to ``goal``: RRT*, optional shortcutting, optimisation."""
    pcfg = cfg.planner_config(seed)
    paths = geoplanner.plan_k(grid, start, goal, pcfg, cfg.k)
    trajs = []
    ocfg = viaopt.OptConfig(v_max=cfg.v_max, rng_seed=seed)
    for path in paths:
        if cfg.simplify:
            path = geoplanner.simplify(path, grid, pcfg.clearance)
        if cfg.via_spacing:
            path = geoplanner.densify(path, cfg.via_spacing)
        via = viaopt.optimize(path, ocfg)
        trajs.append(quintic.synthesize(via))
    return paths, trajs


def build_continuous_bank(grid, points, start_idx: int, cfg: ExperimentConfig):
    """Bank over every scenario point except ``start_idx``; returns (bank, goal ids, pc, seconds)."""
    start = points[start_idx].xy
    goal_ids = [j for j in range(len(points)) if j != start_idx]
    before = counters.planner_calls()
    t0 = time.perf_counter()
    entries = []
    for j in goal_ids:
        seed = geoplanner.derived_seed(cfg.seed, start_idx, j)
        entries.append(build_continuous_entry(grid, start, points[j].xy, cfg, seed)[1])
    elapsed = time.perf_counter() - t0
    pc = counters.planner_calls() - before
    bank = HypothesisBank(tuple(goal_ids), tuple(tuple(e) for e in entries))
    return bank, goal_ids, pc, elapsed


def ground_truth_stream(grid, points, start_idx: int, goal_idx: int, cfg: ExperimentConfig):
    seed = geoplanner.derived_seed(cfg.seed + cfg.gt_planner_seed_offset, start_idx, goal_idx)
    pcfg = cfg.planner_config(seed, clearance=cfg.gt_clearance,
                              iterations=cfg.gt_planner_iterations)
    path = geoplanner.plan(grid, points[start_idx].xy, points[goal_idx].xy, pcfg)
    path = geoplanner.simplify(path, grid, cfg.gt_clearance)
    fcfg = sim.FollowerConfig(v_max=cfg.v_max, initial_theta=points[start_idx].theta)
    return path, sim.follow_path(grid, path, fcfg)


def scenario_points(cfg: ExperimentConfig, grid):
    if cfg.scenario_path:
        pts = gridmap.load_scenario(cfg.scenario_path)
        if cfg.n_points and len(pts) > cfg.n_points:
            pts = pts[:cfg.n_points]
        return pts
    return gridmap.sample_scenario_points(grid, cfg.n_points, cfg.seed)


def run_continuous_experiment(cfg: ExperimentConfig, grid=None, points=None,
                              problems=None) -> ExperimentResult:
    """Every ordered (start, goal) pair of scenario points is one problem.

    Problems that share a start point share its bank, which is built once;
    its planner calls and build time are reported on each of those problems.
    ``problems`` optionally restricts the run to a list of (start, goal) pairs.
    """
    if grid is None:
        if not cfg.map_path:
            raise ConfigError("continuous experiments need a map")
        grid = gridmap.load_map(cfg.map_path)
    if points is None:
        points = scenario_points(cfg, grid)
    n = len(points)
    if problems is None:
        problems = [(i, j) for i in range(n) for j in range(n) if i != j]
    if cfg.max_problems is not None:
        problems = problems[:cfg.max_problems]
    result = ExperimentResult([], metadata={
        "mode": "continuous", "k": cfg.k, "seed": cfg.seed, "v_max": cfg.v_max,
        "n_points": n, "simplify": cfg.simplify,
        "ground_truth": "pure-pursuit unicycle over an RRT* path",
    })
    banks = {}
    for i, j in problems:
        pid = f"{i}-{j}"
        if i not in banks:
            try:
                banks[i] = build_continuous_bank(grid, points, i, cfg)
            except VecGRError as exc:
                banks[i] = exc
        built = banks[i]
        if isinstance(built, Exception):
            result.rows.append(MetricsRow.failure(pid, error=f"bank: {built}"))
            continue
        bank, goal_ids, pc, offline = built
        try:
            _, stream = ground_truth_stream(grid, points, i, j, cfg)
            obs = stream.test_points
            history, online, calls = run_online(bank, obs, cfg.timing_repeats)
        except VecGRError as exc:
            result.rows.append(MetricsRow.failure(pid, pc, offline, f"ground truth: {exc}"))
            continue
        result.online_planner_calls += calls
        true_idx = goal_ids.index(j)
        result.rows.append(compute_metrics(history, true_idx, pid, pc, online, offline))
        for n_pt, post in enumerate(history, 1):
            result.points.append(PointRecord(pid, n_pt, post.t, true_idx, post.argmax,
                                             post.spread, float(post.probabilities[true_idx])))
    return result


# ---------------------------------------------------------------- discrete

def true_goal_index(goals, problem) -> int:
    target = problem.goals[0]
    for idx, g in enumerate(goals):
        if g == target:
            return idx
    raise ConfigError("the problem's goal is not among the hypotheses")


def build_discrete_bank(problem, goals, k: int, optimal_only: bool = False):
    before = counters.planner_calls()
    t0 = time.perf_counter()
    entries = []
    for g in goals:
        plans = strips.topk_plans(problem, g, k, optimal_only=optimal_only)
        entries.append(tuple(strips.rollout(problem, p) for p in plans))
    elapsed = time.perf_counter() - t0
    pc = counters.planner_calls() - before
    return HypothesisBank(tuple(range(len(goals))), tuple(entries)), pc, elapsed


def prefix_length(fraction: float, total: int) -> int:
    return int(math.ceil(fraction * total - 1e-9))


def run_discrete_problem(problem, goals, actions, cfg: ExperimentConfig, name: str,
                         true_idx: int | None = None):
    """Rows (one per observation fraction) and point records for one problem."""
    if not goals:
        raise ConfigError("empty hypothesis set")
    if true_idx is None:
        true_idx = true_goal_index(goals, problem)
    bank, pc, offline = build_discrete_bank(problem, goals, cfg.k, cfg.optimal_only)
    states = strips.observed_states(problem, actions)
    rows, points, online_calls = [], [], 0
    for frac in cfg.fractions:
        pid = f"{name}@{frac:g}"
        n = prefix_length(frac, len(states))
        if n == 0:
            rows.append(MetricsRow.failure(pid, pc, offline, "no observations in prefix"))
            continue
        obs = [Observation(states[i - 1], i) for i in range(1, n + 1)]
        history, online, calls = run_online(bank, obs, cfg.timing_repeats)
        online_calls += calls
        post = history[-1]
        rows.append(compute_metrics([post], true_idx, pid, pc, online, offline))
        points.append(PointRecord(pid, 1, post.t, true_idx, post.argmax, post.spread,
                                  float(post.probabilities[true_idx])))
    return rows, points, online_calls


def run_discrete_experiment(cfg: ExperimentConfig, instances=None) -> ExperimentResult:
    """``instances``: optional list of (name, problem, goals, actions[, true index])."""
    if instances is None:
        instances = list(load_discrete_instances(cfg))
    result = ExperimentResult([], metadata={
        "mode": "discrete", "k": cfg.k, "fractions": list(cfg.fractions),
        "optimal_only": cfg.optimal_only})
    for inst in instances[:cfg.max_problems]:
        name, problem, goals, actions = inst[:4]
        true_idx = inst[4] if len(inst) > 4 else None
        try:
            rows, points, calls = run_discrete_problem(problem, goals, actions, cfg, name,
                                                       true_idx)
        except ConfigError:
            raise
        except VecGRError as exc:
            result.rows += [MetricsRow.failure(f"{name}@{f:g}", error=str(exc))
                            for f in cfg.fractions]
            continue
        result.rows += rows
        result.points += points
        result.online_planner_calls += calls
    return result


def load_discrete_instances(cfg: ExperimentConfig):
    """Yield instances from files.

    Each problem path is either a problem file (with ``--hypotheses`` and
    ``--observations`` given explicitly) or a directory holding
    ``problem.pddl``, ``hyps.dat`` and ``obs.dat``; in the latter case the
    domain defaults to ``domain.pddl`` next to the problem.
    """
    if not cfg.problem_paths:
        raise ConfigError("discrete experiments need at least one problem")
    for p in cfg.problem_paths:
        p = Path(p)
        if p.is_dir():
            dom_path = Path(cfg.domain_path) if cfg.domain_path else p / "domain.pddl"
            if not dom_path.exists():
                dom_path = p.parent / "domain.pddl"
            prob_path, hyp_path, obs_path = p / "problem.pddl", p / "hyps.dat", p / "obs.dat"
            name = p.name
        else:
            if not (cfg.domain_path and cfg.hypotheses_path and cfg.observations_path):
                raise ConfigError("problem files need --domain, --hypotheses and --observations")
            dom_path, prob_path = Path(cfg.domain_path), p
            hyp_path, obs_path = Path(cfg.hypotheses_path), Path(cfg.observations_path)
            name = p.stem
        problem = strips.load_problem(dom_path, prob_path)
        goals = strips.parse_hypotheses(hyp_path.read_text(), problem)
        if not goals:
            raise ConfigError(f"{hyp_path}: empty hypothesis set")
        actions = strips.parse_observations(obs_path.read_text(), problem)
        yield name, problem, goals, actions


# ---------------------------------------------------------------- output

def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.6f}"
    return str(v)


def format_rows_csv(rows, mask_timing: bool = False) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_COLUMNS) + "\n")
    for r in rows:
        vals = []
        for c in CSV_COLUMNS:
            v = getattr(r, c)
            vals.append("-" if mask_timing and c in TIMING_COLUMNS else _fmt(v))
        buf.write(",".join(vals) + "\n")
    return buf.getvalue()


def format_points_csv(points) -> str:
    buf = io.StringIO()
    buf.write(",".join(POINT_COLUMNS) + "\n")
    for p in points:
        buf.write(",".join(_fmt(getattr(p, c)) for c in POINT_COLUMNS) + "\n")
    return buf.getvalue()


def rows_to_json(result: ExperimentResult) -> str:
    def clean(d):
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}
    return json.dumps({"metadata": result.metadata,
                       "online_planner_calls": result.online_planner_calls,
                       "rows": [clean(asdict(r)) for r in result.rows],
                       "summary": summarize(result.rows)}, indent=2, sort_keys=True)


def write_result(result: ExperimentResult, out, points_out=None,
                 mask_timing: bool = False) -> None:
    out = Path(out)
    if out.suffix.lower() == ".json":
        out.write_text(rows_to_json(result))
    else:
        out.write_text(format_rows_csv(result.rows, mask_timing))
    if points_out:
        Path(points_out).write_text(format_points_csv(result.points))


def read_rows_csv(text: str) -> list[MetricsRow]:
    rows = []
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"expected columns {','.join(CSV_COLUMNS)}")
    for rec in reader:
        failed = rec["failed"] == "1"

        def num(key):
            v = rec[key]
            return math.nan if v in ("nan", "-", "") else float(v)
        row = MetricsRow.__new__(MetricsRow)
        row.__dict__.update(problem=rec["problem"], ppv=num("ppv"), acc=num("acc"),
                            spr=num("spr"), pc=int(float(rec["pc"])), online_s=num("online_s"),
                            offline_s=num("offline_s"), failed=failed, error="")
        rows.append(row)
    return rows


def summarize(rows, group_by_fraction: bool = False) -> dict:
    """Mean and standard deviation of each metric over non-failed rows."""
    groups = {}
    for r in rows:
        key = r.problem.rsplit("@", 1)[1] if group_by_fraction and "@" in r.problem else "all"
        groups.setdefault(key, []).append(r)
    out = {}
    for key, rs in groups.items():
        ok = [r for r in rs if not r.failed]
        entry = {"problems": len(rs), "failed": len(rs) - len(ok)}
        for col in ("ppv", "acc", "spr", "pc", "online_s", "offline_s"):
            vals = np.array([getattr(r, col) for r in ok], dtype=float)
            vals = vals[~np.isnan(vals)]
            entry[col] = float(vals.mean()) if len(vals) else None
            entry[col + "_std"] = float(vals.std()) if len(vals) else None
        out[key] = entry
    return out


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})


# ---------------------------------------------------------------- k sweeps

def route_side(positions, start, goal) -> int:
    """Side of the start-goal line a route keeps to: +1 left, -1 right, 0 on it.

    Decided by the sign of the mean cross product of route points against the
    chord, which tells the two routes around a central obstacle apart.
    """
    pts = np.asarray(positions, dtype=float)
    s, g = np.asarray(start, float), np.asarray(goal, float)
    chord = g - s
    cross = chord[0] * (pts[:, 1] - s[1]) - chord[1] * (pts[:, 0] - s[0])
    m = float(cross.mean())
    return 0 if abs(m) < 1e-9 else (1 if m > 0 else -1)


@dataclass
class SweepRecord:
    problem: str
    k: int
    row: MetricsRow
    gt_side: int
    bank_sides: tuple  # route side of each trajectory for the true goal


def run_k_sweep(grid, points, problems, cfg: ExperimentConfig, ks) -> list[SweepRecord]:
    """Recognise the same ground truth with banks of several sizes.

    One bank of ``max(ks)`` trajectories per goal is built per start point;
    the bank for a smaller ``k`` is its first ``k`` trajectories per goal,
    which is exactly what a run with that ``k`` would build, because path
    seeds depend only on the path index.  PC is reported as ``|G| * k``.
    """
    kmax = max(ks)
    big = replace(cfg, k=kmax)
    out = []
    banks = {}
    for i, j in problems:
        pid = f"{i}-{j}"
        if i not in banks:
            banks[i] = build_continuous_bank(grid, points, i, big)
        bank, goal_ids, _, offline = banks[i]
        path, stream = ground_truth_stream(grid, points, i, j, cfg)
        obs = stream.test_points
        true_idx = goal_ids.index(j)
        start, goal = points[i].xy, points[j].xy
        gt_side = route_side(stream.full.positions, start, goal)
        for k in ks:
            sub = HypothesisBank(bank.goals, tuple(ms[:k] for ms in bank.trajectories))
            history, online, _ = run_online(sub, obs, cfg.timing_repeats)
            row = compute_metrics(history, true_idx, pid, len(goal_ids) * k, online, offline)
            sides = tuple(route_side(m.positions, start, goal)
                          for m in sub.trajectories[true_idx])
            out.append(SweepRecord(pid, k, row, gt_side, sides))
    return out
