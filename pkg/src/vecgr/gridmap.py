"""Occupancy grids in the Moving-AI ``.map`` format.

Cell ``(r, c)`` covers ``[c*m, (c+1)*m) x [r*m, (r+1)*m)`` in world meters, with
``m = meters_per_cell``; the world is always 10 m wide.  Distances to obstacles
are measured to obstacle cell centres, and the map border counts as a wall.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import BoundsError, DimensionError, InfeasibleScenario, ParseError

WORLD_SIZE = 10.0
PASSABLE_GLYPHS = frozenset(".G")
OBSTACLE_GLYPHS = frozenset("@OTW")

SCENARIO_CLEARANCE = 0.23
SCENARIO_SEPARATION = 2.0
MAX_SCENARIO_ATTEMPTS = 100_000


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    width: int
    height: int
    cells: np.ndarray  # (height, width) bool, True = passable
    meters_per_cell: float
    _tree: cKDTree | None = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise DimensionError("grid dimensions must be positive")
        cells = np.asarray(self.cells, dtype=bool)
        if cells.size != self.width * self.height:
            raise DimensionError(
                f"expected {self.width * self.height} cells, got {cells.size}")
        cells = cells.reshape(self.height, self.width).copy()
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        rows, cols = np.nonzero(~cells)
        tree = None
        if rows.size:
            centres = np.column_stack([(cols + 0.5), (rows + 0.5)]) * self.meters_per_cell
            tree = cKDTree(centres)
        object.__setattr__(self, "_tree", tree)

    def __eq__(self, other):
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return (self.width == other.width and self.height == other.height
                and self.meters_per_cell == other.meters_per_cell
                and np.array_equal(self.cells, other.cells))

    @property
    def extent(self) -> tuple[float, float]:
        return self.width * self.meters_per_cell, self.height * self.meters_per_cell

    @property
    def obstacle_count(self) -> int:
        return int((~self.cells).sum())

    @property
    def free_fraction(self) -> float:
        return float(self.cells.mean())

    @property
    def half_cell_diagonal(self) -> float:
        return self.meters_per_cell * math.sqrt(0.5)

    def cell_of(self, x, y):
        """Row/column indices of the cells containing the given points (clamped)."""
        m = self.meters_per_cell
        c = np.clip(np.floor(np.asarray(x, dtype=float) / m).astype(int), 0, self.width - 1)
        r = np.clip(np.floor(np.asarray(y, dtype=float) / m).astype(int), 0, self.height - 1)
        return r, c

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        m = self.meters_per_cell
        return (col + 0.5) * m, (row + 0.5) * m

    def in_bounds(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        w, h = self.extent
        return ((pts[:, 0] >= 0) & (pts[:, 0] <= w) & (pts[:, 1] >= 0) & (pts[:, 1] <= h))

    def boundary_distance_many(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        w, h = self.extent
        return np.minimum.reduce([pts[:, 0], w - pts[:, 0], pts[:, 1], h - pts[:, 1]])

    def obstacle_distance_many(self, points) -> np.ndarray:
        """Distance to the nearest obstacle cell centre (inf on obstacle-free maps)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self._tree is None:
            return np.full(len(pts), np.inf)
        d, _ = self._tree.query(pts)
        return d

    def is_free_many(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r, c = self.cell_of(pts[:, 0], pts[:, 1])
        return self.in_bounds(pts) & self.cells[r, c]

    def wall_distance_many(self, points) -> np.ndarray:
        """Vectorised :func:`wall_distance`; raises BoundsError if any point is outside."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if not self.in_bounds(pts).all():
            bad = pts[~self.in_bounds(pts)][0]
            raise BoundsError(f"point ({bad[0]:.4g}, {bad[1]:.4g}) is outside the map")
        d = np.minimum(self.boundary_distance_many(pts), self.obstacle_distance_many(pts))
        r, c = self.cell_of(pts[:, 0], pts[:, 1])
        return np.where(self.cells[r, c], d, 0.0)

    def wall_distance(self, x: float, y: float) -> float:
        return float(self.wall_distance_many([[x, y]])[0])


def wall_distance(grid: OccupancyGrid, x: float, y: float) -> float:
    """Euclidean distance in meters from ``(x, y)`` to the nearest wall.

    Walls are obstacle cell centres and the map border; the result is 0 when the
    point lies inside an obstacle cell.
    """
    return grid.wall_distance(x, y)


def from_rows(rows, meters_per_cell: float | None = None) -> OccupancyGrid:
    """Build a grid from a list of glyph strings (row 0 first)."""
    height, width = len(rows), len(rows[0]) if rows else 0
    if height == 0 or width == 0:
        raise DimensionError("empty map body")
    cells = np.array([[ch in PASSABLE_GLYPHS for ch in row] for row in rows], dtype=bool)
    if meters_per_cell is None:
        meters_per_cell = WORLD_SIZE / width
    return OccupancyGrid(width, height, cells, meters_per_cell)


def parse_map(text: str) -> OccupancyGrid:
    lines = text.splitlines()
    if len(lines) < 4:
        raise ParseError("truncated header", line=len(lines) + 1)

    def field_value(idx, key):
        parts = lines[idx].split()
        if len(parts) != 2 or parts[0].lower() != key:
            raise ParseError(f"expected '{key} <value>'", line=idx + 1)
        return parts[1]

    field_value(0, "type")
    try:
        height = int(field_value(1, "height"))
        width = int(field_value(2, "width"))
    except ValueError:
        raise ParseError("height/width must be integers", line=2) from None
    if lines[3].strip().lower() != "map":
        raise ParseError("expected 'map'", line=4)
    if height <= 0 or width <= 0:
        raise ParseError("height and width must be positive", line=2)

    body = lines[4:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != height:
        raise DimensionError(f"header says {height} rows, body has {len(body)}")
    for i, row in enumerate(body):
        if len(row) != width:
            raise DimensionError(
                f"row {i} (line {i + 5}) has {len(row)} glyphs, expected {width}")
    return from_rows(body)


def load_map(path) -> OccupancyGrid:
    return parse_map(Path(path).read_text())


def format_map(grid: OccupancyGrid) -> str:
    rows = ["".join("." if free else "@" for free in row) for row in grid.cells]
    header = ["type octile", f"height {grid.height}", f"width {grid.width}", "map"]
    return "\n".join(header + rows) + "\n"


def save_map(grid: OccupancyGrid, path) -> None:
    Path(path).write_text(format_map(grid))


@dataclass(frozen=True)
class ScenarioPoint:
    x: float
    y: float
    theta: float

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


def sample_scenario_points(grid: OccupancyGrid, count: int, rng_seed: int,
                           clearance: float = SCENARIO_CLEARANCE,
                           separation: float = SCENARIO_SEPARATION,
                           max_attempts: int = MAX_SCENARIO_ATTEMPTS) -> list[ScenarioPoint]:
    """Rejection-sample ``count`` free points that keep ``clearance`` from walls
    and ``separation`` from each other.

    Candidates are accepted greedily; after 1000 consecutive rejections the
    partial set is discarded and sampling starts over.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    rng = np.random.default_rng(rng_seed)
    w, h = grid.extent
    chosen: list[np.ndarray] = []
    thetas: list[float] = []
    attempts = 0
    stale = 0
    batch = 256
    while attempts < max_attempts:
        n = min(batch, max_attempts - attempts)
        cand = rng.uniform([0.0, 0.0], [w, h], size=(n, 2))
        cand_theta = rng.uniform(0.0, 2 * math.pi, size=n)
        ok = grid.wall_distance_many(cand) >= clearance
        for p, th, good in zip(cand, cand_theta, ok):
            attempts += 1
            if good and all(np.hypot(*(p - q)) >= separation for q in chosen):
                chosen.append(p)
                thetas.append(float(th))
                stale = 0
                if len(chosen) == count:
                    return [ScenarioPoint(float(q[0]), float(q[1]), t)
                            for q, t in zip(chosen, thetas)]
            else:
                stale += 1
                if stale >= 1000:
                    chosen.clear()
                    thetas.clear()
                    stale = 0
    raise InfeasibleScenario(
        f"could not place {count} points after {max_attempts} attempts")


def check_scenario(grid: OccupancyGrid, points, clearance=SCENARIO_CLEARANCE,
                   separation=SCENARIO_SEPARATION) -> bool:
    pts = np.array([[p.x, p.y] for p in points])
    if not grid.in_bounds(pts).all() or (grid.wall_distance_many(pts) < clearance).any():
        return False
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if np.hypot(*(pts[i] - pts[j])) < separation:
                return False
    return True


def format_scenario(points) -> str:
    lines = ["# x y theta"]
    lines += [f"{p.x:.6f} {p.y:.6f} {p.theta:.6f}" for p in points]
    return "\n".join(lines) + "\n"


def parse_scenario(text: str) -> list[ScenarioPoint]:
    points = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError("expected 'x y theta'", line=lineno)
        try:
            x, y, th = map(float, parts)
        except ValueError:
            raise ParseError("non-numeric field", line=lineno) from None
        points.append(ScenarioPoint(x, y, th))
    return points


def load_scenario(path) -> list[ScenarioPoint]:
    return parse_scenario(Path(path).read_text())


def save_scenario(points, path) -> None:
    Path(path).write_text(format_scenario(points))
