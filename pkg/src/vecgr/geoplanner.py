"""RRT* over an occupancy grid, producing via-point positions."""
from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import counters
from .errors import ParseError, PartialResult, PlanningTimeout, PreconditionError
from .gridmap import OccupancyGrid

WALL_LIM = 0.01


@dataclass(frozen=True)
class PlannerConfig:
    time_limit: float = 5.0
    clearance: float = WALL_LIM
    step_size: float = 1.0
    goal_bias: float = 0.05
    rewire_radius_factor: float = 1.5
    rng_seed: int = 0
    # Deterministic mode: a fixed iteration budget replaces the wall-clock limit.
    max_iterations: int | None = None
    max_retries: int = 3

    def __post_init__(self):
        if not self.time_limit > 0:
            raise ValueError("time_limit must be positive")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal_bias must lie in [0, 1]")
        if self.clearance < 0:
            raise ValueError("clearance must be non-negative")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")


@dataclass(frozen=True)
class PositionPath:
    waypoints: tuple[tuple[float, float], ...]
    cost: float

    @classmethod
    def from_points(cls, points) -> "PositionPath":
        wps = tuple((float(x), float(y)) for x, y in points)
        return cls(wps, path_length(wps))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.waypoints, dtype=float)

    def __len__(self):
        return len(self.waypoints)


def path_length(points) -> float:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        return 0.0
    return float(np.hypot(*np.diff(pts, axis=0).T).sum())


class SegmentChecker:
    """Continuous collision test for straight segments.

    Samples are spaced at most ``resolution`` apart and must keep an extra
    ``resolution/2`` margin, so by the 1-Lipschitz property of the distance
    every point of the segment (not only the samples) is at least
    ``clearance`` from walls and outside every obstacle cell.
    """

    def __init__(self, grid: OccupancyGrid, clearance: float, resolution: float):
        self.grid = grid
        self.clearance = clearance
        self.resolution = min(resolution, grid.meters_per_cell / 2.0)
        margin = self.resolution / 2.0
        self.boundary_min = clearance + margin
        self.obstacle_min = max(clearance, grid.half_cell_diagonal) + margin

    def points_ok(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        ok = self.grid.boundary_distance_many(pts) >= self.boundary_min
        ok &= self.grid.obstacle_distance_many(pts) >= self.obstacle_min
        return ok

    def _samples(self, p, q):
        length = math.hypot(q[0] - p[0], q[1] - p[1])
        n = max(1, int(math.ceil(length / self.resolution)))
        s = np.linspace(0.0, 1.0, n + 1)[:, None]
        return p + s * (q - p)

    def segment_free(self, p, q) -> bool:
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        return bool(self.points_ok(self._samples(p, q)).all())

    def segments_free(self, p, qs) -> np.ndarray:
        """Batch test of segments ``p -> q`` for every row of ``qs``."""
        p = np.asarray(p, dtype=float)
        qs = np.atleast_2d(np.asarray(qs, dtype=float))
        if len(qs) == 0:
            return np.zeros(0, dtype=bool)
        chunks, owners = [], []
        for i, q in enumerate(qs):
            s = self._samples(p, q)
            chunks.append(s)
            owners.append(np.full(len(s), i))
        ok = self.points_ok(np.vstack(chunks))
        owner = np.concatenate(owners)
        bad = np.bincount(owner[~ok], minlength=len(qs))
        return bad == 0


def _checker(grid, cfg: PlannerConfig, clearance=None) -> SegmentChecker:
    return SegmentChecker(grid, cfg.clearance if clearance is None else clearance,
                          cfg.step_size / 4.0)


def _check_endpoint(grid, checker, point, name):
    p = np.asarray(point, dtype=float)
    where = f"({p[0]:g}, {p[1]:g})"
    if not grid.in_bounds(p).all() or not grid.is_free_many(p).all():
        raise PreconditionError(f"{name} {where} is not in free space")
    if grid.wall_distance_many(p)[0] < checker.clearance:
        raise PreconditionError(f"{name} {where} is closer than the clearance to a wall")


class RRTStar:
    """One RRT* search.  ``best_cost_history`` records the incumbent cost per iteration."""

    def __init__(self, grid: OccupancyGrid, start, goal, cfg: PlannerConfig):
        self.grid = grid
        self.cfg = cfg
        self.start = np.asarray(start, dtype=float)
        self.goal = np.asarray(goal, dtype=float)
        self.checker = _checker(grid, cfg)
        self.rng = np.random.default_rng(cfg.rng_seed)
        w, h = grid.extent
        self.extent = np.array([w, h])
        self.scale = max(w, h)
        cap = 1024
        self.pos = np.empty((cap, 2))
        self.cost = np.empty(cap)
        self.parent = np.empty(cap, dtype=int)
        self.children: list[list[int]] = []
        self.n = 0
        self.goal_nodes: list[int] = []
        self.goal_dists: list[float] = []
        self.best_cost_history: list[float] = []
        self.iterations = 0

    def _add(self, p, parent, cost):
        if self.n == len(self.pos):
            self.pos = np.vstack([self.pos, np.empty_like(self.pos)])
            self.cost = np.concatenate([self.cost, np.empty_like(self.cost)])
            self.parent = np.concatenate([self.parent, np.empty_like(self.parent)])
        i = self.n
        self.pos[i] = p
        self.cost[i] = cost
        self.parent[i] = parent
        self.children.append([])
        if parent >= 0:
            self.children[parent].append(i)
        self.n += 1
        return i

    def _propagate(self, i, delta):
        stack = [i]
        while stack:
            j = stack.pop()
            self.cost[j] -= delta
            stack.extend(self.children[j])

    def best(self):
        if not self.goal_nodes:
            return math.inf, -1
        idx = np.asarray(self.goal_nodes)
        totals = self.cost[idx] + np.asarray(self.goal_dists)
        j = int(np.argmin(totals))
        return float(totals[j]), int(idx[j])

    def _iterate(self):
        cfg = self.cfg
        if self.rng.random() < cfg.goal_bias:
            sample = self.goal.copy()
        else:
            sample = self.rng.random(2) * self.extent
        n = self.n
        pos = self.pos[:n]
        d2 = ((pos - sample) ** 2).sum(axis=1)
        near_idx = int(np.argmin(d2))
        d = math.sqrt(d2[near_idx])
        if d < 1e-12:
            return
        if d > cfg.step_size:
            new = pos[near_idx] + (sample - pos[near_idx]) * (cfg.step_size / d)
        else:
            new = sample
        if not self.checker.points_ok(new)[0]:
            return
        radius = cfg.rewire_radius_factor * self.scale * math.sqrt(math.log(n + 1) / (n + 1))
        radius = max(radius, 1e-9)
        dn = np.hypot(*(pos - new).T)
        near = np.nonzero(dn <= radius)[0]
        if near_idx not in near:
            near = np.append(near, near_idx)
        cand_cost = self.cost[near] + dn[near]
        order = np.lexsort((near, cand_cost))
        parent = -1
        for o in order:
            j = near[o]
            if self.checker.segment_free(pos[j], new):
                parent = int(j)
                break
        if parent < 0:
            return
        new_cost = float(self.cost[parent] + dn[parent])
        i = self._add(new, parent, new_cost)
        # rewire
        rewire = [j for j in near if j != parent and new_cost + dn[j] < self.cost[j] - 1e-12]
        if rewire:
            free = self.checker.segments_free(new, self.pos[rewire])
            for j, ok in zip(rewire, free):
                if ok:
                    delta = self.cost[j] - (new_cost + dn[j])
                    if delta <= 0:
                        continue
                    old = int(self.parent[j])
                    self.children[old].remove(j)
                    self.parent[j] = i
                    self.children[i].append(j)
                    self._propagate(j, delta)
        dg = math.hypot(*(self.goal - new))
        if dg <= cfg.step_size and (dg < 1e-12 or self.checker.segment_free(new, self.goal)):
            self.goal_nodes.append(i)
            self.goal_dists.append(dg)

    def run(self) -> PositionPath:
        self._add(self.start, -1, 0.0)
        cfg = self.cfg
        if np.allclose(self.start, self.goal, atol=1e-12, rtol=0):
            self.best_cost_history.append(0.0)
            return PositionPath(((float(self.start[0]), float(self.start[1])),), 0.0)
        d0 = math.hypot(*(self.goal - self.start))
        if d0 <= cfg.step_size and self.checker.segment_free(self.start, self.goal):
            self.goal_nodes.append(0)
            self.goal_dists.append(d0)
        deadline = time.perf_counter() + cfg.time_limit
        while True:
            if cfg.max_iterations is not None:
                if self.iterations >= cfg.max_iterations:
                    break
            elif time.perf_counter() >= deadline:
                break
            self._iterate()
            self.iterations += 1
            self.best_cost_history.append(self.best()[0])
        cost, node = self.best()
        if node < 0:
            raise PlanningTimeout(
                f"no path found after {self.iterations} iterations")
        chain = []
        while node >= 0:
            chain.append(self.pos[node])
            node = int(self.parent[node])
        chain.reverse()
        if math.hypot(*(chain[-1] - self.goal)) > 0:
            chain.append(self.goal)
        else:
            chain[-1] = self.goal
        chain[0] = self.start
        return PositionPath.from_points(chain)


def plan(grid: OccupancyGrid, start, goal, cfg: PlannerConfig) -> PositionPath:
    """Best RRT* path from ``start`` to ``goal`` within the configured budget."""
    counters.record_planner_call()
    checker = _checker(grid, cfg)
    _check_endpoint(grid, checker, start, "start")
    _check_endpoint(grid, checker, goal, "goal")
    return RRTStar(grid, start, goal, cfg).run()


def derived_seed(base: int, *keys: int) -> int:
    """Deterministic child seed from a base seed and integer keys."""
    ss = np.random.SeedSequence([int(base) & 0xFFFFFFFF, *[int(k) & 0xFFFFFFFF for k in keys]])
    return int(ss.generate_state(1)[0])


def plan_k(grid: OccupancyGrid, start, goal, cfg: PlannerConfig, k: int) -> list[PositionPath]:
    """``k`` independently seeded RRT* paths, ordered by path index.

    Path ``j`` uses seed ``derived_seed(cfg.rng_seed, j, attempt)``; failed
    attempts are retried with the next attempt number up to ``cfg.max_retries``.
    """
    if k < 1:
        raise ValueError("k must be positive")
    paths = []
    for j in range(k):
        for attempt in range(cfg.max_retries):
            sub = replace(cfg, rng_seed=derived_seed(cfg.rng_seed, j, attempt))
            try:
                paths.append(plan(grid, start, goal, sub))
                break
            except PlanningTimeout:
                continue
    if len(paths) < k:
        raise PartialResult(paths, k)
    return paths


def simplify(path: PositionPath, grid: OccupancyGrid, clearance: float = WALL_LIM,
             step_size: float = PlannerConfig.step_size) -> PositionPath:
    """Greedy shortcutting: from each kept waypoint jump to the farthest visible one."""
    pts = path.array
    if len(pts) <= 2:
        return path
    checker = SegmentChecker(grid, clearance, step_size / 4.0)
    keep = [0]
    i = 0
    while i < len(pts) - 1:
        j = len(pts) - 1
        while j > i + 1 and not checker.segment_free(pts[i], pts[j]):
            j -= 1
        keep.append(j)
        i = j
    out = PositionPath.from_points(pts[keep])
    if out.cost > path.cost + 1e-9:
        return path
    return out


def densify(path: PositionPath, max_spacing: float) -> PositionPath:
    """Insert evenly spaced collinear waypoints so no segment exceeds ``max_spacing``.

    The geometry (and so collision status and cost) is unchanged; the extra
    via points let the optimiser carry speed through long straight stretches.
    """
    if not max_spacing > 0:
        raise ValueError("max_spacing must be positive")
    pts = path.array
    out = [pts[0]]
    for p, q in zip(pts[:-1], pts[1:]):
        n = max(1, int(math.ceil(math.hypot(*(q - p)) / max_spacing - 1e-9)))
        for s in range(1, n + 1):
            out.append(p + (q - p) * (s / n))
    out[-1] = pts[-1]
    return PositionPath(tuple((float(x), float(y)) for x, y in out), path.cost)


def path_clearance_ok(grid: OccupancyGrid, path: PositionPath, clearance: float,
                      spacing: float) -> bool:
    """Independent re-check: wall distance at points every ``spacing`` along each segment."""
    pts = path.array
    for p, q in zip(pts[:-1], pts[1:]):
        length = math.hypot(*(q - p))
        s = np.arange(0.0, length, spacing) / length if length > 0 else np.zeros(1)
        samples = p + np.append(s, 1.0)[:, None] * (q - p)
        if (grid.wall_distance_many(samples) < clearance - 1e-9).any():
            return False
    return True


def format_path_csv(path: PositionPath) -> str:
    buf = io.StringIO()
    buf.write("idx,x,y\n")
    for i, (x, y) in enumerate(path.waypoints):
        buf.write(f"{i},{x:.9f},{y:.9f}\n")
    buf.write(f"# cost={path.cost:.9f}\n")
    return buf.getvalue()


def parse_path_csv(text: str) -> PositionPath:
    pts = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("idx"):
            continue
        try:
            _, x, y = line.split(",")
            pts.append((float(x), float(y)))
        except ValueError:
            raise ParseError("expected 'idx,x,y'", line=lineno) from None
    return PositionPath.from_points(pts)


def save_path(path: PositionPath, dest) -> None:
    Path(dest).write_text(format_path_csv(path))
