"""Markov jump process primitives.

Rate matrices follow the column convention throughout the package:
``A[s_to, s_from]`` is the rate of jumping from ``s_from`` to ``s_to``, the
columns sum to zero and ``-A[s, s] = |A_s|`` is the total exit rate of ``s``.
Marginals evolve as ``pi_t = expm(A t) @ pi_0``.  Most textbooks (and scipy's
examples) use the transposed, row convention; use :func:`from_row_convention`
when importing such matrices.
"""
from __future__ import annotations

import bisect
import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelError

GENERATOR_TOL = 1e-9
DIST_TOL = 1e-12


@dataclass(frozen=True)
class TimeInterval:
    start: float
    end: float

    def __post_init__(self):
        start, end = float(self.start), float(self.end)
        if not (np.isfinite(start) and np.isfinite(end)) or not start < end:
            raise ModelError(f"invalid interval [{self.start}, {self.end}]")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)

    @property
    def length(self) -> float:
        return self.end - self.start

    @classmethod
    def coerce(cls, value) -> "TimeInterval":
        if isinstance(value, cls):
            return value
        start, end = value
        return cls(start, end)


def _frozen(arr):
    arr.setflags(write=False)
    return arr


def as_generator(A) -> np.ndarray:
    """Validate a rate matrix and return it as a read-only float array.

    The diagonal is recomputed from the off-diagonal entries so that the
    columns sum to zero to machine precision.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ModelError(f"rate matrix must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ModelError("rate matrix has non-finite entries")
    off = A.copy()
    np.fill_diagonal(off, 0.0)
    if np.any(off < 0):
        raise ModelError("rate matrix has negative off-diagonal entries")
    colsum = A.sum(axis=0)
    scale = max(1.0, float(np.abs(A).max()))
    if np.any(np.abs(colsum) > GENERATOR_TOL * scale):
        raise ModelError("rate matrix columns must sum to zero (column convention)")
    np.fill_diagonal(off, -off.sum(axis=0))
    return _frozen(off)


def from_row_convention(Q) -> np.ndarray:
    """Convert a row-convention generator (rows sum to zero) to ours."""
    return as_generator(np.asarray(Q, dtype=float).T)


def generator_from_rates(off_diagonal) -> np.ndarray:
    """Build a generator from a matrix of off-diagonal rates ``R[to, from]``."""
    R = np.array(off_diagonal, dtype=float)
    np.fill_diagonal(R, 0.0)
    np.fill_diagonal(R, -R.sum(axis=0))
    return as_generator(R)


def exit_rates(A) -> np.ndarray:
    return -np.diagonal(A).copy()


def max_exit_rate(A) -> float:
    return float(np.max(-np.diagonal(A)))


def as_distribution(pi0, n_states=None) -> np.ndarray:
    p = np.array(pi0, dtype=float).reshape(-1)
    if n_states is not None and p.shape[0] != n_states:
        raise ModelError(f"initial distribution has {p.shape[0]} entries, expected {n_states}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ModelError("initial distribution must be finite and nonnegative")
    if abs(p.sum() - 1.0) > DIST_TOL * max(1, p.shape[0]):
        raise ModelError(f"initial distribution sums to {p.sum()!r}, not 1")
    return _frozen(p)


def uniform_distribution(n_states) -> np.ndarray:
    return _frozen(np.full(n_states, 1.0 / n_states))


@dataclass(frozen=True)
class Trajectory:
    """A pure-jump path ``(s0, states, times)`` on ``interval``.

    ``states[i]`` is the state entered at ``times[i]``; the path is
    right-continuous and never jumps to the state it is already in.
    """

    s0: int
    times: np.ndarray
    states: np.ndarray
    interval: TimeInterval
    n_states: int | None = field(default=None, compare=False)

    def __post_init__(self):
        interval = TimeInterval.coerce(self.interval)
        times = np.array(self.times, dtype=float).reshape(-1)
        states = np.array(self.states, dtype=np.int64).reshape(-1)
        s0 = int(self.s0)
        if times.shape != states.shape:
            raise ModelError("times and states must have equal length")
        if times.size:
            if times[0] <= interval.start or times[-1] > interval.end:
                raise ModelError("jump times must lie in (t_start, t_end]")
            if np.any(np.diff(times) <= 0):
                raise ModelError("jump times must be strictly increasing")
            prev = np.concatenate(([s0], states[:-1]))
            if np.any(prev == states):
                raise ModelError("trajectory contains a self-transition")
        if self.n_states is not None:
            top = max(s0, int(states.max()) if states.size else s0)
            if s0 < 0 or (states.size and states.min() < 0) or top >= self.n_states:
                raise ModelError("state index out of range")
        object.__setattr__(self, "interval", interval)
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "states", _frozen(states))
        object.__setattr__(self, "s0", s0)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (self.s0 == other.s0 and self.interval == other.interval
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.states, other.states))

    __hash__ = None

    @property
    def n_jumps(self) -> int:
        return int(self.times.size)

    @property
    def all_states(self) -> np.ndarray:
        """States on each constant piece: ``[s0, s1, ..., sn]``."""
        return np.concatenate(([self.s0], self.states))

    @property
    def breakpoints(self) -> np.ndarray:
        """``[t_start, t1, ..., tn, t_end]``."""
        return np.concatenate(([self.interval.start], self.times, [self.interval.end]))

    def state_at(self, t):
        """State at time(s) ``t`` (right-continuous)."""
        idx = np.searchsorted(self.times, t, side="right")
        return self.all_states[idx]

    @property
    def final_state(self) -> int:
        return int(self.states[-1]) if self.states.size else self.s0

    @classmethod
    def constant(cls, state, interval) -> "Trajectory":
        return cls(state, np.empty(0), np.empty(0, dtype=np.int64), interval)


@dataclass(frozen=True)
class SufficientStats:
    """Dwell times per state and transition counts ``counts[to, from]``."""

    dwell_time: np.ndarray
    transition_counts: np.ndarray

    @property
    def n_transitions(self) -> int:
        return int(self.transition_counts.sum())

    def flat(self) -> np.ndarray:
        """Dwell times followed by off-diagonal counts, row-major (to, from)."""
        n = self.dwell_time.shape[0]
        off = ~np.eye(n, dtype=bool)
        return np.concatenate((self.dwell_time, self.transition_counts[off]))


def sufficient_stats(traj: Trajectory, n_states=None) -> SufficientStats:
    if n_states is None:
        n_states = traj.n_states or int(traj.all_states.max()) + 1
    seq = traj.all_states
    dwell = np.bincount(seq, weights=np.diff(traj.breakpoints), minlength=n_states)
    counts = np.zeros((n_states, n_states), dtype=np.int64)
    np.add.at(counts, (seq[1:], seq[:-1]), 1)
    return SufficientStats(_frozen(dwell.astype(float)), _frozen(counts))


def path_log_density(traj: Trajectory, A, pi0) -> float:
    """Log density of a path under the MJP with generator ``A``.

    The dwell integral is the exact sum of piece length times exit rate.
    """
    A = np.asarray(A, dtype=float)
    pi0 = np.asarray(pi0, dtype=float)
    if pi0[traj.s0] <= 0:
        return -np.inf
    seq = traj.all_states
    rates = A[seq[1:], seq[:-1]]
    if np.any(rates <= 0):
        return -np.inf
    dwell = np.diff(traj.breakpoints)
    return float(np.log(pi0[traj.s0]) + np.log(rates).sum() + np.dot(dwell, np.diagonal(A)[seq]))


def _jump_table(A):
    """Column-wise cumulative jump probabilities and exit rates."""
    exit = exit_rates(A)
    P = np.array(A, dtype=float)
    np.fill_diagonal(P, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        P = np.where(exit > 0, P / np.where(exit > 0, exit, 1.0), 0.0)
    return np.cumsum(P, axis=0), exit


def sample_categorical(p, rng) -> int:
    cum = np.cumsum(p)
    idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return min(idx, len(p) - 1)


def gillespie_sample(A, pi0, interval, rng, s0=None) -> Trajectory:
    """Forward-simulate an MJP path with Gillespie's algorithm.

    Absorbing states (zero exit rate) end the simulation.  A jump exactly at
    ``t_end`` is kept.
    """
    A = as_generator(A)
    interval = TimeInterval.coerce(interval)
    cum, exit = _jump_table(A)
    s = sample_categorical(pi0, rng) if s0 is None else int(s0)
    times, states = _gillespie_loop(cum.T.tolist(), exit.tolist(), s, interval, rng)
    return Trajectory(s, times, states, interval, n_states=A.shape[0])


def gillespie_replicates(A, pi0, interval, rng, n):
    """``n`` independent Gillespie paths; validation and jump tables are
    computed once."""
    A = as_generator(A)
    pi0 = as_distribution(pi0, A.shape[0])
    interval = TimeInterval.coerce(interval)
    cum, exit = _jump_table(A)
    cols, exit = cum.T.tolist(), exit.tolist()
    pcum = np.cumsum(pi0).tolist()
    for _ in range(n):
        s = min(bisect.bisect_right(pcum, rng.random() * pcum[-1]), len(pcum) - 1)
        times, states = _gillespie_loop(cols, exit, s, interval, rng)
        yield Trajectory(s, times, states, interval)


def _gillespie_loop(cum_cols, exit, s, interval, rng):
    # scalar Python loop: per-jump numpy calls cost more than the arithmetic
    t, end = interval.start, interval.end
    last = len(exit) - 1
    times, states = [], []
    expo, unif = rng.standard_exponential, rng.random
    while True:
        r = exit[s]
        if r <= 0:
            break
        t += expo() / r
        if t > end:
            break
        col = cum_cols[s]
        s = min(bisect.bisect_right(col, unif() * col[-1]), last)
        times.append(t)
        states.append(s)
    return times, states


def write_trajectory_csv(traj: Trajectory, fh=None) -> str:
    """Serialize as ``time,state`` rows; the first row is ``t_start,s0``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "state"])
    w.writerow([f"{traj.interval.start:.17g}", traj.s0])
    for t, s in zip(traj.times, traj.states):
        w.writerow([f"{t:.17g}", int(s)])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def read_trajectory_csv(fh, t_end, n_states=None) -> Trajectory:
    rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["time", "state"]:
        raise ModelError("trajectory CSV must start with header 'time,state'")
    body = [r for r in rows[1:] if r]
    if not body:
        raise ModelError("trajectory CSV has no initial row")
    try:
        t0, s0 = float(body[0][0]), int(body[0][1])
        times = [float(r[0]) for r in body[1:]]
        states = [int(r[1]) for r in body[1:]]
    except (ValueError, IndexError) as exc:
        raise ModelError(f"malformed trajectory CSV: {exc}") from None
    return Trajectory(s0, times, states, TimeInterval(t0, t_end), n_states=n_states)
