"""Via-point velocities and segment durations for minimum-time quintic trajectories.

Accelerations at every via point are zero and the agent starts and ends at
rest.  The remaining unknowns (segment durations and interior velocities) are
found by coordinate descent on a penalised objective::

    sum(td) + weight * sum(max(0, peak_speed(segment) - v_max) ** 2)

The weight is raised tenfold whenever a converged solution still exceeds the
speed bound by more than ``violation_target``.
"""
from __future__ import annotations

import io
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import InfeasibleDynamics
from .geoplanner import PositionPath
from .quintic import ViaPoint, ViaSequence, max_speed

PEAK_SAMPLES = 1001  # resolution td/1000 plus both endpoints
COARSE_SAMPLES = 65  # first pass; the fine grid then polishes the result
COARSE_TOLERANCE = 1e-2
PRESOLVE_SAMPLES = 33
FEASIBILITY_RTOL = 1e-3


@dataclass(frozen=True)
class OptConfig:
    v_max: float = 1.0
    penalty_weight: float = 1e3
    max_iters: int = 5000
    tolerance: float = 1e-4
    rng_seed: int = 0
    random_starts: int = 1
    td_min: float = 1e-3
    violation_target: float = 5e-4  # relative; half the accepted 1e-3
    max_penalty_weight: float = 1e12
    presolve: bool = True  # SLSQP on sampled speed constraints before the descent

    def __post_init__(self):
        if not self.v_max > 0:
            raise ValueError("v_max must be positive")
        if not self.penalty_weight > 0:
            raise ValueError("penalty_weight must be positive")


@dataclass
class OptResult:
    via: ViaSequence
    duration: float
    violation: float  # m/s above v_max, worst segment
    weight: float  # penalty weight the returned point is a local minimum for
    iterations: int
    perturbation_scales: np.ndarray  # per-coordinate scales of the final local-min check
    trace: list = field(default_factory=list)  # (start, iter, cost, violation, weight)


def _velocity_basis(n=PEAK_SAMPLES):
    tau = np.linspace(0.0, 1.0, n)
    t2, t3, t4 = tau ** 2, tau ** 3, tau ** 4
    dp = 30 * t2 - 60 * t3 + 30 * t4  # displacement term (divided by td)
    v0 = 1 - 18 * t2 + 32 * t3 - 15 * t4
    v1 = -12 * t2 + 28 * t3 - 15 * t4
    a0 = tau - 4.5 * t2 + 6 * t3 - 2.5 * t4  # times td
    a1 = 1.5 * t2 - 4 * t3 + 2.5 * t4
    return np.stack([dp, v0, v1, a0, a1])


_BASIS = np.ascontiguousarray(_velocity_basis())
_REST_BASIS = np.ascontiguousarray(_BASIS[:3])
_COARSE_REST_BASIS = np.ascontiguousarray(_velocity_basis(COARSE_SAMPLES)[:3])
_PRESOLVE_BASIS = np.ascontiguousarray(_velocity_basis(PRESOLVE_SAMPLES)[:3])


def segment_peak_speed(dp, td, v0, v1, a0=(0.0, 0.0), a1=(0.0, 0.0)) -> float:
    """Peak speed of a quintic segment sampled on the td/1000 grid.

    Uses the Hermite form of the velocity, which is cheaper than building
    coefficients; agrees with :func:`quintic.max_speed` at the default resolution.
    """
    coeffs = np.array([np.asarray(dp, float) / td, v0, v1,
                       np.asarray(a0, float) * td, np.asarray(a1, float) * td])
    vel = coeffs.T @ _BASIS
    vel *= vel
    return math.sqrt((vel[0] + vel[1]).max())


def _rest_peak(dp, td, v0, v1, basis=_REST_BASIS):
    c = np.empty((3, 2))
    c[0] = dp / td
    c[1] = v0
    c[2] = v1
    vel = c.T @ basis
    vel *= vel
    return math.sqrt((vel[0] + vel[1]).max())


def penalized_cost(via: ViaSequence, cfg: OptConfig, weight: float | None = None) -> float:
    w = cfg.penalty_weight if weight is None else weight
    total = 0.0
    penalty = 0.0
    for seg in via.segments():
        total += seg.duration
        excess = max(0.0, max_speed(seg) - cfg.v_max)
        penalty += excess * excess
    return total + w * penalty


class _Descent:
    def __init__(self, pts: np.ndarray, cfg: OptConfig):
        self.pts = pts
        self.cfg = cfg
        self.dp = np.diff(pts, axis=0)
        self.dist = np.hypot(self.dp[:, 0], self.dp[:, 1])
        self.nseg = len(self.dp)
        self.nvel = len(pts) - 2
        self.basis = _REST_BASIS
        self.tol = cfg.tolerance

    def coords(self):
        out = [("td", i) for i in range(self.nseg)]
        for j in range(1, self.nvel + 1):
            out += [("v", j, 0), ("v", j, 1)]
        return out

    def peak(self, td, vel, i):
        return _rest_peak(self.dp[i], td[i], vel[i], vel[i + 1], self.basis)

    def seg_cost(self, td, vel, i, w):
        excess = max(0.0, self.peak(td, vel, i) - self.cfg.v_max)
        return td[i] + w * excess * excess

    def heuristic_start(self):
        v = self.cfg.v_max
        td = np.maximum(self.dist / (0.5 * v), self.cfg.td_min)
        vel = np.zeros_like(self.pts)
        for j in range(1, self.nvel + 1):
            tangent = self.pts[j + 1] - self.pts[j - 1]
            n = np.hypot(*tangent)
            if n > 0:
                vel[j] = 0.5 * v * tangent / n
        return td, vel

    def random_start(self, rng):
        td, _ = self.heuristic_start()
        td = np.maximum(td * rng.uniform(0.5, 2.0, size=td.shape), self.cfg.td_min)
        vel = np.zeros_like(self.pts)
        for j in range(1, self.nvel + 1):
            r = self.cfg.v_max * math.sqrt(rng.random())
            a = rng.uniform(0, 2 * math.pi)
            vel[j] = (r * math.cos(a), r * math.sin(a))
        return td, vel

    def scales(self, td):
        tol = self.tol
        out = []
        for c in self.coords():
            if c[0] == "td":
                out.append(tol * max(td[c[1]], self.cfg.td_min))
            else:
                out.append(tol * self.cfg.v_max)
        return np.array(out)

    def _affected(self, c):
        if c[0] == "td":
            return (c[1],)
        return (c[1] - 1, c[1])

    def _try(self, td, vel, costs, c, delta, w):
        """Apply ``delta`` to coordinate ``c`` if it lowers the cost; return success."""
        segs = self._affected(c)
        if c[0] == "td":
            i = c[1]
            new = td[i] + delta
            if new < self.cfg.td_min:
                new = self.cfg.td_min
            if new == td[i]:
                return False
            old = td[i]
            td[i] = new
        else:
            j, axis = c[1], c[2]
            old = vel[j, axis]
            vel[j, axis] = old + delta
        trial = [self.seg_cost(td, vel, s, w) for s in segs]
        if sum(trial) < sum(costs[s] for s in segs) - 1e-15:
            for s, v in zip(segs, trial):
                costs[s] = v
            return True
        if c[0] == "td":
            td[c[1]] = old
        else:
            vel[c[1], c[2]] = old
        return False

    def _pattern_move(self, td, vel, costs, d_td, d_vel, w):
        """Extrapolate along the last sweep's displacement while that keeps improving."""
        if not (d_td.any() or d_vel.any()):
            return
        for _ in range(20):
            t_td = np.maximum(td + d_td, self.cfg.td_min)
            t_vel = vel + d_vel
            trial = [self.seg_cost(t_td, t_vel, i, w) for i in range(self.nseg)]
            if sum(trial) >= sum(costs) - 1e-15:
                return
            td[:] = t_td
            vel[:] = t_vel
            costs[:] = trial
            d_td = d_td * 2.0
            d_vel = d_vel * 2.0

    def violation(self, td, vel):
        return max(self.peak(td, vel, i) for i in range(self.nseg)) - self.cfg.v_max

    def presolve(self, td, vel) -> bool:
        """Constrained warm start: min sum(td) with speed <= v_max at a few samples.

        Updates ``td`` and ``vel`` in place and returns True when SLSQP ends
        at a usable point.  The descent that follows works on the full grid.
        """
        n, m, B, dp = self.nseg, self.nvel, _PRESOLVE_BASIS, self.dp
        S = B.shape[1]
        v2max = self.cfg.v_max ** 2

        def unpack(x):
            v = np.zeros((n + 1, 2))
            v[1:-1] = x[n:].reshape(m, 2)
            return x[:n], v

        def speeds(x):
            t, v = unpack(x)
            return ((dp / t[:, None])[:, None, :] * B[0][None, :, None]
                    + v[:-1, None, :] * B[1][None, :, None]
                    + v[1:, None, :] * B[2][None, :, None])

        def cons(x):
            return (v2max - (speeds(x) ** 2).sum(-1)).ravel()

        def jac(x):
            t = x[:n]
            v = speeds(x)
            J = np.zeros((n, S, n + 2 * m))
            rows = np.arange(n)
            J[rows, :, rows] = 2 * (v * (dp / t[:, None] ** 2)[:, None, :]).sum(-1) * B[0]
            for i in range(n):
                if i >= 1:
                    J[i, :, n + 2 * (i - 1):n + 2 * i] = -2 * v[i] * B[1][:, None]
                if i < m:
                    J[i, :, n + 2 * i:n + 2 * i + 2] = -2 * v[i] * B[2][:, None]
            return J.reshape(n * S, -1)

        x0 = np.concatenate([td, vel[1:-1].ravel()])
        grad = np.concatenate([np.ones(n), np.zeros(2 * m)])
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                res = minimize(lambda x: x[:n].sum(), x0, jac=lambda x: grad, method="SLSQP",
                               constraints=[{"type": "ineq", "fun": cons, "jac": jac}],
                               bounds=[(self.cfg.td_min, None)] * n + [(None, None)] * (2 * m),
                               options={"maxiter": 200, "ftol": 1e-10})
        except (ValueError, FloatingPointError):
            return False
        if not np.all(np.isfinite(res.x)) or cons(res.x).min() < -1e-3 * v2max:
            return False
        t, v = unpack(res.x)
        td[:] = np.maximum(t, self.cfg.td_min)
        vel[:] = v
        return True

    def run(self, td, vel, start_id, trace):
        """Warm start, then descent on the full peak grid.

        Without a usable presolve the descent first runs on a coarse grid.
        """
        if self.cfg.presolve and self.presolve(td, vel):
            return self._run(td, vel, start_id, trace, self.cfg.penalty_weight, 0.01, 0)
        self.basis, self.tol = _COARSE_REST_BASIS, max(self.cfg.tolerance, COARSE_TOLERANCE)
        it, w, _ = self._run(td, vel, start_id, trace, self.cfg.penalty_weight, 0.25, 0)
        self.basis, self.tol = _REST_BASIS, self.cfg.tolerance
        return self._run(td, vel, start_id, trace, w, 0.01, it)

    def _run(self, td, vel, start_id, trace, w, step_frac, it):
        cfg = self.cfg
        coords = self.coords()
        costs = [self.seg_cost(td, vel, i, w) for i in range(self.nseg)]
        steps = np.array([step_frac * td[c[1]] if c[0] == "td" else step_frac * cfg.v_max
                          for c in coords])
        while it < cfg.max_iters:
            it += 1
            td_before, vel_before = td.copy(), vel.copy()
            for n, c in enumerate(coords):
                if self._try(td, vel, costs, c, steps[n], w) or \
                        self._try(td, vel, costs, c, -steps[n], w):
                    cap = td[c[1]] if c[0] == "td" else 2 * cfg.v_max
                    steps[n] = min(2 * steps[n], max(cap, 1e-12))
                else:
                    steps[n] *= 0.5
            self._pattern_move(td, vel, costs, td - td_before, vel - vel_before, w)
            viol = self.violation(td, vel)
            trace.append((start_id, it, float(sum(costs)), max(viol, 0.0), w))
            scales = self.scales(td)
            if (steps >= scales).any():
                continue
            # converged at this weight: confirm with an exact +-scale sweep
            moved = False
            for n, c in enumerate(coords):
                if self._try(td, vel, costs, c, scales[n], w) or \
                        self._try(td, vel, costs, c, -scales[n], w):
                    moved = True
            if moved:
                steps = np.maximum(steps, 4 * self.scales(td))
                continue
            if viol <= cfg.violation_target * cfg.v_max or w >= cfg.max_penalty_weight:
                return it, w, scales
            w = min(w * 10.0, cfg.max_penalty_weight)
            costs = [self.seg_cost(td, vel, i, w) for i in range(self.nseg)]
            frac = min(0.05, step_frac)
            steps = np.array([frac * td[c[1]] if c[0] == "td" else frac * cfg.v_max
                              for c in coords])
        return it, w, self.scales(td)


def _dedupe(points) -> np.ndarray:
    pts = [np.asarray(points[0], dtype=float)]
    for p in points[1:]:
        p = np.asarray(p, dtype=float)
        if np.hypot(*(p - pts[-1])) > 1e-12:
            pts.append(p)
    if len(pts) > 1:
        pts[-1] = np.asarray(points[-1], dtype=float)
    return np.array(pts)


def _to_via(pts, td, vel) -> ViaSequence:
    out = []
    for j, p in enumerate(pts):
        out.append(ViaPoint(float(p[0]), float(p[1]), float(vel[j, 0]), float(vel[j, 1]),
                            0.0, 0.0, float(td[j]) if j < len(td) else 0.0))
    return ViaSequence(tuple(out))


def optimize_detailed(via_positions, cfg: OptConfig = OptConfig()) -> OptResult:
    points = via_positions.waypoints if isinstance(via_positions, PositionPath) else via_positions
    if len(points) < 1:
        raise ValueError("need at least one via position")
    pts = _dedupe(points)
    if len(pts) == 1:
        p = pts[0]
        via = ViaSequence((ViaPoint(p[0], p[1], td=cfg.td_min), ViaPoint(p[0], p[1])))
        return OptResult(via, cfg.td_min, 0.0, cfg.penalty_weight, 0, np.array([]), [])

    problem = _Descent(pts, cfg)
    rng = np.random.default_rng(cfg.rng_seed)
    starts = [problem.heuristic_start()]
    starts += [problem.random_start(rng) for _ in range(cfg.random_starts)]
    trace = []
    best = None
    for sid, (td, vel) in enumerate(starts):
        iters, w, scales = problem.run(td, vel, sid, trace)
        viol = max(problem.violation(td, vel), 0.0)
        feasible = viol <= FEASIBILITY_RTOL * cfg.v_max
        key = (not feasible, float(td.sum()) if feasible else viol)
        if best is None or key < best[0]:
            best = (key, td.copy(), vel.copy(), viol, w, iters, scales)
    (infeasible, _), td, vel, viol, w, iters, scales = best
    via = _to_via(pts, td, vel)
    if infeasible:
        raise InfeasibleDynamics(via, viol)
    return OptResult(via, float(td.sum()), viol, w, iters, scales, trace)


def optimize(via_positions, cfg: OptConfig = OptConfig()) -> ViaSequence:
    """Complete via sequence with minimal total duration under the speed bound."""
    return optimize_detailed(via_positions, cfg).via


def format_trace_csv(trace) -> str:
    buf = io.StringIO()
    buf.write("iter,cost,violation\n")
    for n, (_, _, cost, viol, _) in enumerate(trace, 1):
        buf.write(f"{n},{cost:.9g},{viol:.9g}\n")
    return buf.getvalue()
