"""Piecewise fifth-degree polynomial trajectories through via points."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateSegment, DomainError, ParseError

STANDARD_DT = 0.1
_EPS = 1e-9


@dataclass(frozen=True)
class ViaPoint:
    x: float
    y: float
    vx: float = 0.0
    vy: float = 0.0
    ax: float = 0.0
    ay: float = 0.0
    td: float = 0.0  # duration of the segment that starts here


@dataclass(frozen=True)
class ViaSequence:
    points: tuple[ViaPoint, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if len(self.points) < 2:
            raise ValueError("a via sequence needs at least two points")

    @property
    def durations(self) -> list[float]:
        return [p.td for p in self.points[:-1]]

    @property
    def total_duration(self) -> float:
        return float(sum(self.durations))

    def segments(self) -> list["QuinticSegment"]:
        return [segment_coeffs(a, b) for a, b in zip(self.points[:-1], self.points[1:])]


@dataclass(frozen=True)
class QuinticSegment:
    ax_coeffs: tuple[float, ...]  # a5 .. a0
    ay_coeffs: tuple[float, ...]  # b5 .. b0
    duration: float


@dataclass(frozen=True)
class TimedState:
    x: float
    y: float
    vx: float
    vy: float
    t: int


class Trajectory:
    """Uniformly sampled states ``[x, y, vx, vy]``; sample ``i`` has timestamp index ``i``."""

    def __init__(self, states, dt: float = STANDARD_DT):
        arr = np.array(states, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 4 or len(arr) == 0:
            raise ValueError("states must be a non-empty (T, 4) array")
        arr.setflags(write=False)
        self.states = arr
        self.dt = float(dt)

    def __len__(self):
        return len(self.states)

    def __eq__(self, other):
        return (isinstance(other, Trajectory) and self.dt == other.dt
                and np.array_equal(self.states, other.states))

    def __repr__(self):
        return f"Trajectory(T={len(self)}, dt={self.dt})"

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :2]

    @property
    def timestamps(self) -> np.ndarray:
        return np.arange(len(self))

    @property
    def samples(self) -> list[TimedState]:
        return [TimedState(*map(float, row), t=i) for i, row in enumerate(self.states)]

    def at(self, t: int) -> TimedState:
        """State at timestamp index ``t``, clamped to the final sample."""
        i = min(max(int(t), 0), len(self) - 1)
        return TimedState(*map(float, self.states[i]), t=int(t))


def segment_coeffs(v_i: ViaPoint, v_next: ViaPoint) -> QuinticSegment:
    td = v_i.td
    if not td > 0:
        raise DegenerateSegment(f"segment duration must be positive, got {td}")
    ax = _axis_coeffs(v_i.x, v_next.x, v_i.vx, v_next.vx, v_i.ax, v_next.ax, td)
    ay = _axis_coeffs(v_i.y, v_next.y, v_i.vy, v_next.vy, v_i.ay, v_next.ay, td)
    return QuinticSegment(ax, ay, float(td))


def _axis_coeffs(p0, p1, v0, v1, a0, a1, td):
    a5 = (td * ((a1 - a0) * td - 6.0 * (v1 + v0)) + 12.0 * (p1 - p0)) / (2.0 * td ** 5)
    a4 = (td * (16.0 * v0 + 14.0 * v1 + (3.0 * a0 - 2.0 * a1) * td) + 30.0 * (p0 - p1)) / (2.0 * td ** 4)
    a3 = (td * ((a1 - 3.0 * a0) * td - 8.0 * v1 - 12.0 * v0) + 20.0 * (p1 - p0)) / (2.0 * td ** 3)
    return (a5, a4, a3, a0 / 2.0, v0, p0)


def _horner(coeffs, t):
    a5, a4, a3, a2, a1, a0 = coeffs
    pos = ((((a5 * t + a4) * t + a3) * t + a2) * t + a1) * t + a0
    vel = (((5 * a5 * t + 4 * a4) * t + 3 * a3) * t + 2 * a2) * t + a1
    acc = ((20 * a5 * t + 12 * a4) * t + 6 * a3) * t + 2 * a2
    return pos, vel, acc


def eval_segment(seg: QuinticSegment, t):
    """Position, velocity and acceleration ``(x, y)`` pairs at local time ``t``.

    ``t`` may be a scalar or an array; each returned quantity then has shape
    ``(2,)`` or ``(n, 2)``.
    """
    tt = np.asarray(t, dtype=float)
    if (tt < -_EPS).any() or (tt > seg.duration + _EPS).any():
        raise DomainError(f"t outside [0, {seg.duration}]")
    tt = np.clip(tt, 0.0, seg.duration)
    px, vx, ax = _horner(seg.ax_coeffs, tt)
    py, vy, ay = _horner(seg.ay_coeffs, tt)
    return (np.stack([px, py], axis=-1), np.stack([vx, vy], axis=-1),
            np.stack([ax, ay], axis=-1))


def synthesize(via: ViaSequence, dt: float = STANDARD_DT) -> Trajectory:
    """Sample the concatenated quintic segments every ``dt`` seconds.

    If the total duration is not a multiple of ``dt`` the exact end state is
    appended as one extra sample.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    segs = via.segments()
    bounds = np.concatenate([[0.0], np.cumsum([s.duration for s in segs])])
    total = bounds[-1]
    n = int(math.floor(total / dt + 1e-9))
    times = np.arange(n + 1) * dt
    idx = np.clip(np.searchsorted(bounds, times, side="right") - 1, 0, len(segs) - 1)
    states = np.empty((len(times), 4))
    for s, seg in enumerate(segs):
        mask = idx == s
        if mask.any():
            local = np.clip(times[mask] - bounds[s], 0.0, seg.duration)
            pos, vel, _ = eval_segment(seg, local)
            states[mask, :2] = pos
            states[mask, 2:] = vel
    end = via.points[-1]
    end_state = [end.x, end.y, end.vx, end.vy]
    if times[-1] < total - 1e-9:
        states = np.vstack([states, end_state])
    else:
        states[-1] = end_state
    return Trajectory(states, dt)


def max_speed(obj, resolution: float | None = None) -> float:
    """Peak Euclidean speed of a segment, via sequence or sampled trajectory.

    Segments are sampled every ``resolution`` seconds (default ``duration/1000``)
    plus both endpoints; trajectories use their stored samples.
    """
    if isinstance(obj, Trajectory):
        return float(np.hypot(obj.states[:, 2], obj.states[:, 3]).max())
    if isinstance(obj, ViaSequence):
        return max(max_speed(s, resolution) for s in obj.segments())
    seg = obj
    res = seg.duration / 1000.0 if resolution is None else resolution
    if res <= 0:
        raise ValueError("resolution must be positive")
    n = int(math.floor(seg.duration / res))
    t = np.append(np.arange(n + 1) * res, seg.duration)
    t = t[t <= seg.duration]
    _, vel, _ = eval_segment(seg, t)
    return float(np.hypot(vel[:, 0], vel[:, 1]).max())


def format_trajectory_csv(traj: Trajectory, header_lines=()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    buf.write("t,x,y,vx,vy\n")
    for i, (x, y, vx, vy) in enumerate(traj.states):
        buf.write(f"{i},{x:.9g},{y:.9g},{vx:.9g},{vy:.9g}\n")
    return buf.getvalue()


def parse_trajectory_csv(text: str, dt: float = STANDARD_DT):
    """Return ``(trajectory, comments)``; ``comments`` maps ``key=value`` header entries."""
    comments = {}
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                comments[k.strip()] = v.strip()
            continue
        if line.startswith("t,"):
            continue
        try:
            t, x, y, vx, vy = line.split(",")
            rows.append((int(t), float(x), float(y), float(vx), float(vy)))
        except ValueError:
            raise ParseError("expected 't,x,y,vx,vy'", line=lineno) from None
    if not rows:
        raise ParseError("no trajectory rows")
    rows.sort()
    if [r[0] for r in rows] != list(range(len(rows))):
        raise ParseError("timestamps must be 0, 1, 2, ...")
    return Trajectory([r[1:] for r in rows], dt), comments


def save_trajectory(traj: Trajectory, path, header_lines=()) -> None:
    Path(path).write_text(format_trajectory_csv(traj, header_lines))
