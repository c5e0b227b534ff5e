"""Blocked Gibbs sampler for MJP paths via uniformization.

One sweep: add virtual jumps given the current path, relabel every grid time
by FFBS with transition matrix ``B = I + A / omega``, drop the self
transitions.  Observations enter only through per-window log-likelihoods
supplied by an :class:`ObservationModel`.

Window convention: the grid ``t_start < w_1 < ... < w_n <= t_end`` cuts the
interval into windows ``[w_i, w_{i+1})``; the last window is closed so that an
observation at ``t_end`` belongs to it.  An observation exactly at ``w_i``
belongs to the window starting at ``w_i``.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .core import (TimeInterval, Trajectory, as_generator, gillespie_sample,
                   sufficient_stats)
from .errors import ImpossibleObservationsError, ModelError
from .ffbs import HmmProblem, ffbs_sample
from .uniformization import (DEFAULT_K, dominating_rate, sample_piecewise_poisson,
                             sample_virtual_jumps, subordinated_transition_matrix)


class ObservationModel(ABC):
    """Source of log-likelihoods for a constant state over a time window."""

    n_states: int

    @abstractmethod
    def window_log_likelihoods(self, edges) -> np.ndarray:
        """``(len(edges) - 1, n_states)`` log-likelihoods, one row per window
        ``[edges[i], edges[i+1])`` (the last window closed on the right)."""

    def interval_log_likelihood(self, state, a, b, closed=False) -> float:
        """Log-likelihood of the data in ``[a, b)`` (``[a, b]`` if ``closed``)
        given the path sits in ``state`` throughout."""
        if not a < b:
            raise ModelError("window must have positive length")
        if closed:
            return float(self.window_log_likelihoods(np.array([a, b]))[0, state])
        # open on the right: the extra zero-length tail owns anything at b
        ll = self.window_log_likelihoods(np.array([a, b, b]))
        return float(ll[0, state])


class NoObservations(ObservationModel):
    def __init__(self, n_states):
        self.n_states = int(n_states)

    def window_log_likelihoods(self, edges):
        return np.zeros((len(edges) - 1, self.n_states))


def window_index(edges, times):
    """Window owning each time, for windows cut at ``edges[1:-1]``."""
    return np.searchsorted(np.asarray(edges)[1:-1], times, side="right")


class DiscreteObservations(ObservationModel):
    """Noisy observations of the state at fixed times.

    ``log_likelihoods[j, s]`` is ``log p(X_j | S(t_j) = s)``.
    """

    def __init__(self, times, log_likelihoods):
        times = np.asarray(times, dtype=float).reshape(-1)
        ll = np.atleast_2d(np.asarray(log_likelihoods, dtype=float))
        if ll.shape[0] != times.size:
            raise ModelError("need one log-likelihood row per observation time")
        if times.size and np.any(np.diff(times) < 0):
            raise ModelError("observation times must be sorted")
        if np.any(np.isnan(ll)) or np.any(ll == np.inf):
            raise ModelError("observation log-likelihoods must be finite or -inf")
        self.times = times
        self.log_likelihoods = ll
        self.n_states = ll.shape[1]

    @classmethod
    def from_noise(cls, times, values, log_density, n_states):
        """Build from observed values and ``log_density(value, state)``."""
        ll = [[log_density(x, s) for s in range(n_states)] for x in values]
        return cls(times, np.asarray(ll, dtype=float).reshape(len(values), n_states))

    @classmethod
    def exact(cls, times, states, n_states):
        """Noiseless observations of the state."""
        ll = np.full((len(states), n_states), -np.inf)
        ll[np.arange(len(states)), np.asarray(states, dtype=int)] = 0.0
        return cls(times, ll)

    @classmethod
    def symmetric_noise(cls, times, values, n_states, error):
        """Observed value equals the state w.p. ``1 - error``, else uniform
        over the other states."""
        if error == 0:
            return cls.exact(times, values, n_states)
        if not 0 < error < 1 or n_states < 2:
            raise ModelError("symmetric noise needs 0 <= error < 1 and >= 2 states")
        ll = np.full((len(values), n_states), np.log(error / (n_states - 1)))
        ll[np.arange(len(values)), np.asarray(values, dtype=int)] = np.log1p(-error)
        return cls(times, ll)

    def window_log_likelihoods(self, edges):
        edges = np.asarray(edges, dtype=float)
        out = np.zeros((edges.size - 1, self.n_states))
        if self.times.size:
            inside = (self.times >= edges[0]) & (self.times <= edges[-1])
            idx = window_index(edges, self.times[inside])
            np.add.at(out, idx, self.log_likelihoods[inside])
        return out


@dataclass(frozen=True)
class GibbsConfig:
    omega_multiplier: float = DEFAULT_K
    n_burnin: int = 0
    n_samples: int = 1000
    rng_seed: int | None = None
    keep_paths: bool = False

    def __post_init__(self):
        if not self.omega_multiplier > 1:
            raise ModelError("omega multiplier k must be > 1")
        if self.n_burnin < 0 or self.n_samples < 0:
            raise ModelError("burn-in and sample counts must be nonnegative")


def grid_edges(interval: TimeInterval, grid) -> np.ndarray:
    return np.concatenate(([interval.start], grid, [interval.end]))


def _relabel(traj_interval, grid, states) -> Trajectory:
    keep = states[1:] != states[:-1]
    return Trajectory(states[0], grid[keep], states[1:][keep], traj_interval)


def gibbs_kernel(traj: Trajectory, A, pi0, obs: ObservationModel, omega, rng,
                 strict=True) -> Trajectory:
    """One sweep of the uniformization Gibbs sampler under generator ``A``."""
    A = np.asarray(A, dtype=float)
    virtual = sample_virtual_jumps(traj, A, omega, rng, strict=strict)
    grid = np.concatenate((traj.times, virtual.times))
    grid.sort()
    if grid.size > 1 and np.any(np.diff(grid) == 0):
        raise ModelError("duplicate grid time while merging virtual jumps")
    edges = grid_edges(traj.interval, grid)
    ll = obs.window_log_likelihoods(edges)
    B = subordinated_transition_matrix(A, omega)
    problem = HmmProblem.from_matrices(pi0, B, ll)
    sample = ffbs_sample(problem, rng)
    return _relabel(traj.interval, grid, sample.states)


def initial_trajectory(A, pi0, obs, interval, rng, method="prior", k=DEFAULT_K,
                       max_tries=100) -> Trajectory:
    """Starting path for a chain.

    ``"prior"`` draws from the MJP prior by Gillespie's algorithm and ignores
    ``obs``.  ``"grid"`` draws a rate-``k * max|A_s|`` Poisson grid, adds one uniform
    point in each gap between discrete observation times, and labels it by
    FFBS against ``obs``.  This gives a start inside the
    posterior support (useful for noiseless data under slow dynamics).
    """
    interval = TimeInterval.coerce(interval)
    if method == "prior":
        return gillespie_sample(A, pi0, interval, rng)
    if method != "grid":
        raise ValueError(f"unknown initialization {method!r}")
    omega = dominating_rate(A, k)
    B = subordinated_transition_matrix(A, omega)
    t_obs = obs.times if isinstance(obs, DiscreteObservations) else np.empty(0)
    t_obs = np.unique(np.concatenate(([interval.start], t_obs[t_obs > interval.start])))
    last = None
    for _ in range(max_tries):
        grid = sample_piecewise_poisson([interval.start, interval.end], [omega], rng)
        # one extra point inside every gap between observation times
        anchors = t_obs[:-1] + (1.0 - rng.random(t_obs.size - 1)) * np.diff(t_obs)
        grid = np.union1d(grid, anchors)
        ll = obs.window_log_likelihoods(grid_edges(interval, grid))
        try:
            sample = ffbs_sample(HmmProblem.from_matrices(pi0, B, ll), rng)
        except ImpossibleObservationsError as exc:
            last = exc
            continue
        return _relabel(interval, grid, sample.states)
    raise last


def run_chain(init: Trajectory | None, A, pi0, obs, config: GibbsConfig, interval=None,
              rng=None, callback=None):
    """Run burn-in then ``n_samples`` sweeps at fixed ``A``.

    Returns the post-burn-in trajectories when ``config.keep_paths`` is set,
    otherwise their :class:`SufficientStats`.  ``callback(i, traj)`` is invoked
    on every sweep including burn-in.
    """
    A = as_generator(A)
    n = A.shape[0]
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    omega = dominating_rate(A, config.omega_multiplier)
    traj = init
    if traj is None:
        if interval is None:
            raise ModelError("an interval is required when no initial trajectory is given")
        traj = initial_trajectory(A, pi0, obs, interval, rng)
    out = []
    for i in range(config.n_burnin + config.n_samples):
        traj = gibbs_kernel(traj, A, pi0, obs, omega, rng)
        if callback is not None:
            callback(i, traj)
        if i >= config.n_burnin:
            out.append(traj if config.keep_paths else sufficient_stats(traj, n))
    return out


def stats_matrix(stats_list) -> np.ndarray:
    """Stack :meth:`SufficientStats.flat` rows."""
    return np.array([s.flat() for s in stats_list])
