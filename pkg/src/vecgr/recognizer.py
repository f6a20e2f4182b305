"""Online goal inference against precomputed hypothesis banks.

This module deliberately depends on nothing that plans: trajectories arrive
precomputed, and each observation costs one vectorised distance evaluation
per (goal, trajectory) pair.

Trajectories are duck-typed.  Anything with a ``positions`` array of shape
``(T, 2)`` is continuous; anything with a ``states`` sequence of fact sets is
discrete.  Observation timestamps index trajectory samples directly, and
timestamps past the end of a trajectory compare against its final sample.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .errors import EmptyObservation, OrderingError

TIE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Observation:
    state: Any  # TimedState-like (x, y attributes) or a fact set
    t: int


def euclid_continuous(a, b) -> float:
    """Planar distance between two states; velocities are ignored."""
    return math.hypot(a.x - b.x, a.y - b.y)


def euclid_discrete(a, b) -> float:
    """Square root of the size of the symmetric difference of two fact sets."""
    return math.sqrt(len(frozenset(a) ^ frozenset(b)))


def _state_at(traj, t: int):
    if hasattr(traj, "at"):
        return traj.at(t)
    states = traj.states if hasattr(traj, "states") else traj
    return states[min(max(int(t), 0), len(states) - 1)]


def likelihood_from_mean_distance(dbar):
    """``1 - exp(-1/dbar)``, with the ``dbar == 0`` limit equal to 1."""
    d = np.asarray(dbar, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):  # subnormal dbar: 1/dbar = inf, value 1
        out = np.where(d > 0, -np.expm1(-1.0 / np.where(d > 0, d, 1.0)), 1.0)
    return float(out) if out.ndim == 0 else out


def likelihood_single(obs_stream: Sequence[Observation], traj, dist: Callable) -> float:
    if len(obs_stream) == 0:
        raise EmptyObservation("no observations")
    total = 0.0
    for o in obs_stream:
        total += dist(o.state, _state_at(traj, o.t))
    return likelihood_from_mean_distance(total / len(obs_stream))


def likelihood_multi(obs_stream, bank_entry, dist: Callable) -> float:
    if len(bank_entry) == 0:
        raise ValueError("bank entry has no trajectories")
    return sum(likelihood_single(obs_stream, m, dist) for m in bank_entry) / len(bank_entry)


@dataclass(frozen=True, eq=False)
class HypothesisBank:
    goals: tuple
    trajectories: tuple  # per goal: tuple of trajectories
    priors: tuple | None = None

    def __post_init__(self):
        goals = tuple(self.goals)
        trajs = tuple(tuple(t) for t in self.trajectories)
        if len(goals) == 0:
            raise ValueError("bank needs at least one goal")
        if len(trajs) != len(goals):
            raise ValueError("one trajectory list per goal required")
        if any(len(t) == 0 for t in trajs):
            raise ValueError("every goal needs at least one trajectory")
        if self.priors is None:
            priors = (1.0 / len(goals),) * len(goals)
        else:
            p = np.asarray(self.priors, dtype=float)
            if p.shape != (len(goals),) or (p <= 0).any():
                raise ValueError("priors must be positive, one per goal")
            priors = tuple(float(x) for x in p / p.sum())
        object.__setattr__(self, "goals", goals)
        object.__setattr__(self, "trajectories", trajs)
        object.__setattr__(self, "priors", priors)

    @property
    def k(self) -> int:
        return max(len(t) for t in self.trajectories)

    @property
    def discrete(self) -> bool:
        first = self.trajectories[0][0]
        return not hasattr(first, "positions")


@dataclass(frozen=True)
class Posterior:
    probabilities: np.ndarray
    likelihoods: np.ndarray
    argmax: int
    goal: Any
    spread: int
    tie_set: tuple
    t: int
    n_observations: int


class _ContinuousTable:
    """Trajectory positions padded to a common length with their final sample."""

    def __init__(self, bank: HypothesisBank):
        g, k = len(bank.goals), bank.k
        tmax = max(len(m.positions) for ms in bank.trajectories for m in ms)
        self.table = np.zeros((g, k, tmax, 2))
        for i, ms in enumerate(bank.trajectories):
            for j, m in enumerate(ms):
                pos = np.asarray(m.positions, dtype=float)
                self.table[i, j, :len(pos)] = pos
                self.table[i, j, len(pos):] = pos[-1]
        self.tmax = tmax

    def distances(self, state, t: int) -> np.ndarray:
        idx = min(max(int(t), 0), self.tmax - 1)
        d = self.table[:, :, idx, :] - (state.x, state.y)
        return np.sqrt(d[..., 0] ** 2 + d[..., 1] ** 2)


class _DiscreteTable:
    """Fact sets as boolean rows over the facts that occur in the bank."""

    def __init__(self, bank: HypothesisBank):
        facts = sorted({f for ms in bank.trajectories for m in ms
                        for s in m.states for f in s}, key=repr)
        self.index = {f: i for i, f in enumerate(facts)}
        g, k = len(bank.goals), bank.k
        tmax = max(len(m.states) for ms in bank.trajectories for m in ms)
        self.table = np.zeros((g, k, tmax, len(facts)), dtype=bool)
        for i, ms in enumerate(bank.trajectories):
            for j, m in enumerate(ms):
                for s_idx in range(tmax):
                    s = m.states[min(s_idx, len(m.states) - 1)]
                    self.table[i, j, s_idx, [self.index[f] for f in s]] = True
        self.tmax = tmax

    def distances(self, state, t: int) -> np.ndarray:
        idx = min(max(int(t), 0), self.tmax - 1)
        row = np.zeros(len(self.index), dtype=bool)
        unknown = 0
        for f in state:
            pos = self.index.get(f)
            if pos is None:
                unknown += 1
            else:
                row[pos] = True
        diff = (self.table[:, :, idx, :] != row).sum(axis=-1) + unknown
        return np.sqrt(diff)


class _GenericTable:
    def __init__(self, bank: HypothesisBank, dist: Callable):
        self.bank = bank
        self.dist = dist

    def distances(self, state, t: int) -> np.ndarray:
        out = np.zeros((len(self.bank.goals), self.bank.k))
        for i, ms in enumerate(self.bank.trajectories):
            for j, m in enumerate(ms):
                out[i, j] = self.dist(state, _state_at(m, t))
        return out


class Recognizer:
    """Incremental posterior over the goals of one bank for one observation stream.

    Each update adds one distance per (goal, trajectory) to running sums, so
    its cost does not grow with the number of past observations.
    """

    def __init__(self, bank: HypothesisBank, dist: Callable | None = None):
        self.bank = bank
        if dist is not None:
            self._table = _GenericTable(bank, dist)
        elif bank.discrete:
            self._table = _DiscreteTable(bank)
        else:
            self._table = _ContinuousTable(bank)
        counts = [len(ms) for ms in bank.trajectories]
        self._mask = np.array([[j < c for j in range(bank.k)] for c in counts])
        self._counts = np.array(counts, dtype=float)
        self._priors = np.asarray(bank.priors)
        self.reset()

    def reset(self):
        self._sums = np.zeros((len(self.bank.goals), self.bank.k))
        self._n = 0
        self._last_t = None
        self.history: list[Posterior] = []

    @property
    def n_observations(self) -> int:
        return self._n

    def update(self, obs: Observation) -> Posterior:
        if self._last_t is not None and obs.t <= self._last_t:
            raise OrderingError(f"timestamp {obs.t} does not exceed {self._last_t}")
        self._sums += self._table.distances(obs.state, obs.t)
        self._n += 1
        self._last_t = obs.t
        post = self._posterior(obs.t)
        self.history.append(post)
        return post

    def _posterior(self, t) -> Posterior:
        single = likelihood_from_mean_distance(self._sums / self._n)
        lik = np.where(self._mask, single, 0.0).sum(axis=1) / self._counts
        joint = lik * self._priors
        probs = joint / joint.sum()
        return make_posterior(probs, lik, self.bank.goals, t, self._n)


def make_posterior(probs, likelihoods, goals, t=0, n=0) -> Posterior:
    probs = np.asarray(probs, dtype=float)
    best = int(np.argmax(probs))  # first maximum = lowest goal index
    ties = tuple(int(i) for i in np.nonzero(probs >= probs[best] - TIE_TOLERANCE)[0])
    return Posterior(probs, np.asarray(likelihoods, dtype=float), best, goals[best],
                     len(ties), ties, t, n)


def batch_posterior(bank: HypothesisBank, obs_stream, dist: Callable) -> Posterior:
    """Posterior recomputed from scratch over the whole stream (reference path)."""
    lik = np.array([likelihood_multi(obs_stream, ms, dist) for ms in bank.trajectories])
    joint = lik * np.asarray(bank.priors)
    return make_posterior(joint / joint.sum(), lik, bank.goals, obs_stream[-1].t,
                          len(obs_stream))


def recognize(bank: HypothesisBank, obs_stream, dist: Callable | None = None):
    """Goal label with the highest posterior after folding in the whole stream."""
    if len(obs_stream) == 0:
        raise EmptyObservation("no observations")
    rec = Recognizer(bank, dist)
    post = None
    for o in obs_stream:
        post = rec.update(o)
    return post.goal


def format_history_csv(history, goals) -> str:
    buf = io.StringIO()
    buf.write("t,goal,probability\n")
    for post in history:
        for g, p in zip(goals, post.probabilities):
            buf.write(f"{post.t},{g},{p:.12g}\n")
    return buf.getvalue()
