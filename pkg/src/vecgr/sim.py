"""Ground-truth observation streams from a unicycle following a planned path.

The agent obeys planar unicycle kinematics::

    x' = alpha cos(theta),  y' = alpha sin(theta),  theta' = omega

integrated with forward Euler at the sampling period.  A pure-pursuit
controller tracks the path at up to ``v_max``.  The controller is a stand-in
for a time-optimal control solve; it keeps the properties the recognizer
relies on (goal-reaching, speed-bounded, collision-free, near-minimal time).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ControllerTimeout, ParseError
from .geoplanner import WALL_LIM, PositionPath
from .gridmap import OccupancyGrid
from .quintic import STANDARD_DT, Trajectory, format_trajectory_csv, parse_trajectory_csv
from .recognizer import Observation

N_TEST_POINTS = 6


def wrap_angle(a: float) -> float:
    """Map an angle to (-pi, pi]."""
    a = math.fmod(a, 2 * math.pi)
    if a <= -math.pi:
        a += 2 * math.pi
    elif a > math.pi:
        a -= 2 * math.pi
    return a


@dataclass(frozen=True)
class UnicycleState:
    x: float
    y: float
    theta: float
    t: float = 0.0


@dataclass(frozen=True)
class ControlInput:
    alpha: float  # forward speed
    omega: float  # turn rate


def step(s: UnicycleState, u: ControlInput, dt: float) -> UnicycleState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    return UnicycleState(s.x + u.alpha * math.cos(s.theta) * dt,
                         s.y + u.alpha * math.sin(s.theta) * dt,
                         wrap_angle(s.theta + u.omega * dt),
                         s.t + dt)


@dataclass(frozen=True)
class FollowerConfig:
    v_max: float = 1.0
    omega_lim: float = 3.0
    dt: float = STANDARD_DT
    lookahead: float = 0.3
    heading_gain: float = 4.0
    goal_tol: float = 0.05
    wall_lim: float = WALL_LIM
    budget_factor: float = 10.0
    budget_slack: float = 5.0  # seconds, covers turning on the spot at the start
    initial_theta: float | None = None  # None: face along the first path segment

    def __post_init__(self):
        if not (self.v_max > 0 and self.omega_lim > 0 and self.dt > 0):
            raise ConfigError("v_max, omega_lim and dt must be positive")
        if not self.lookahead > 0 or not self.goal_tol > 0:
            raise ConfigError("lookahead and goal_tol must be positive")


@dataclass(frozen=True)
class ObservationStream:
    full: Trajectory
    test_indices: tuple

    @property
    def test_points(self) -> list[Observation]:
        return [Observation(self.full.at(i), i) for i in self.test_indices]

    @property
    def duration(self) -> float:
        return (len(self.full) - 1) * self.full.dt


def test_point_indices(n_samples: int, count: int = N_TEST_POINTS) -> tuple:
    """Sample indices nearest to ``i * tf / (count + 1)`` for ``i = 1..count``."""
    last = n_samples - 1
    return tuple(int(round(i * last / (count + 1))) for i in range(1, count + 1))


class _PathTracker:
    """Arc-length bookkeeping for a polyline with monotone progress."""

    def __init__(self, pts: np.ndarray):
        self.pts = pts
        seg = np.diff(pts, axis=0)
        self.seg_len = np.hypot(seg[:, 0], seg[:, 1])
        self.cum = np.concatenate([[0.0], np.cumsum(self.seg_len)])
        self.length = float(self.cum[-1])
        self.progress = 0.0

    def point_at(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.cum, s, side="right")) - 1
        i = min(i, len(self.seg_len) - 1)
        if self.seg_len[i] == 0:
            return self.pts[i + 1].copy()
        f = (s - self.cum[i]) / self.seg_len[i]
        return self.pts[i] + f * (self.pts[i + 1] - self.pts[i])

    def project(self, p: np.ndarray, window: float) -> float:
        """Closest arc length to ``p`` within ``[progress, progress + window]``."""
        lo, hi = self.progress, min(self.progress + window, self.length)
        best_s, best_d = lo, math.inf
        i0 = max(int(np.searchsorted(self.cum, lo, side="right")) - 1, 0)
        for i in range(i0, len(self.seg_len)):
            if self.cum[i] > hi:
                break
            a, L = self.pts[i], self.seg_len[i]
            if L == 0:
                continue
            d = (self.pts[i + 1] - a) / L
            s_local = float(np.clip(np.dot(p - a, d), lo - self.cum[i], hi - self.cum[i]))
            s_local = min(max(s_local, 0.0), L)
            q = a + s_local * d
            dist = math.hypot(*(p - q))
            if dist < best_d:
                best_d, best_s = dist, self.cum[i] + s_local
        self.progress = max(self.progress, best_s)
        return self.progress


def follow_path(grid: OccupancyGrid, path: PositionPath,
                cfg: FollowerConfig = FollowerConfig()) -> ObservationStream:
    pts = path.array
    goal = pts[-1]
    if cfg.initial_theta is not None:
        theta0 = wrap_angle(cfg.initial_theta)
    else:
        theta0 = 0.0
        for q in pts[1:]:
            if math.hypot(*(q - pts[0])) > 0:
                theta0 = math.atan2(q[1] - pts[0][1], q[0] - pts[0][0])
                break
    state = UnicycleState(float(pts[0][0]), float(pts[0][1]), theta0)
    samples = [(state.x, state.y, 0.0, 0.0)]
    if len(pts) < 2 or path.cost == 0 or math.hypot(*(goal - pts[0])) <= cfg.goal_tol:
        full = Trajectory(samples, cfg.dt)
        return ObservationStream(full, test_point_indices(1))

    tracker = _PathTracker(pts)
    budget = cfg.budget_factor * tracker.length / cfg.v_max + cfg.budget_slack
    max_steps = int(math.ceil(budget / cfg.dt))
    window = 2 * cfg.v_max * cfg.dt + cfg.lookahead
    for _ in range(max_steps):
        p = np.array([state.x, state.y])
        d_goal = math.hypot(*(goal - p))
        if d_goal <= cfg.goal_tol:
            break
        s = tracker.project(p, window)
        target = tracker.point_at(s + cfg.lookahead)
        if math.hypot(*(target - p)) < 1e-9:
            target = goal
        err = wrap_angle(math.atan2(target[1] - p[1], target[0] - p[0]) - state.theta)
        omega = float(np.clip(cfg.heading_gain * err, -cfg.omega_lim, cfg.omega_lim))
        alpha = cfg.v_max * max(0.0, math.cos(err))
        alpha = min(alpha, d_goal / cfg.dt)
        nxt = step(state, ControlInput(alpha, omega), cfg.dt)
        # clearance guard: slow down (down to pivoting in place) rather than clip a wall
        for _ in range(8):
            if grid.wall_distance_many([[nxt.x, nxt.y]])[0] >= cfg.wall_lim:
                break
            alpha *= 0.5
            nxt = step(state, ControlInput(alpha, omega), cfg.dt)
        else:
            alpha = 0.0
            nxt = step(state, ControlInput(alpha, omega), cfg.dt)
        samples.append((nxt.x, nxt.y, alpha * math.cos(state.theta),
                        alpha * math.sin(state.theta)))
        state = nxt
    else:
        if math.hypot(goal[0] - state.x, goal[1] - state.y) > cfg.goal_tol:
            raise ControllerTimeout(
                f"goal not reached within {budget:.1f} s "
                f"(remaining distance {math.hypot(goal[0] - state.x, goal[1] - state.y):.3f} m)")
    full = Trajectory(samples, cfg.dt)
    return ObservationStream(full, test_point_indices(len(full)))


def stream_violations(grid: OccupancyGrid, stream: ObservationStream, v_max: float,
                      wall_lim: float = WALL_LIM) -> dict:
    """Independent post-hoc checks of a stream; all values should be zero."""
    pos = stream.full.positions
    dt = stream.full.dt
    speeds = np.hypot(*np.diff(pos, axis=0).T) / dt if len(pos) > 1 else np.zeros(0)
    walls = grid.wall_distance_many(pos)
    n = len(pos)
    tf = (n - 1) * dt
    spacing = [abs(idx * dt - i * tf / (N_TEST_POINTS + 1))
               for i, idx in enumerate(stream.test_indices, 1)]
    return {
        "speed": int((speeds > v_max + 1e-6).sum()),
        "clearance": int((walls < wall_lim - 1e-6).sum()),
        "spacing": int(sum(s > dt + 1e-12 for s in spacing)),
    }


def format_stream_csv(stream: ObservationStream, header_lines=()) -> str:
    lines = list(header_lines)
    lines.append("test_points=" + ",".join(str(i) for i in stream.test_indices))
    return format_trajectory_csv(stream.full, lines)


def parse_stream_csv(text: str, dt: float = STANDARD_DT) -> ObservationStream:
    traj, comments = parse_trajectory_csv(text, dt)
    if "test_points" not in comments:
        raise ParseError("missing '# test_points=' header")
    try:
        idx = tuple(int(v) for v in comments["test_points"].split(","))
    except ValueError:
        raise ParseError("malformed test_points header") from None
    if any(not 0 <= i < len(traj) for i in idx):
        raise ParseError("test point index out of range")
    return ObservationStream(traj, idx)


def save_stream(stream: ObservationStream, path, header_lines=()) -> None:
    Path(path).write_text(format_stream_csv(stream, header_lines))


def load_stream(path, dt: float = STANDARD_DT) -> ObservationStream:
    return parse_stream_csv(Path(path).read_text(), dt)
