"""Markov-modulated Poisson processes.

Events arrive as a Poisson process whose rate is ``rates[S(t)]`` for a latent
MJP ``S``.  Conditioned on a window of constant state ``s`` the data contribute
``count * log(rate_s) - rate_s * width``, so a Gibbs sweep only needs per-window
event counts, found by binary search over the sorted event times.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .bayes import InitialDistMode, RatePrior, empty_stats, mh_rate_update, sample_rate_posterior
from .core import (TimeInterval, Trajectory, as_distribution, as_generator,
                   gillespie_sample, sufficient_stats)
from .errors import ModelError
from .gibbs import GibbsConfig, ObservationModel, gibbs_kernel, initial_trajectory
from .uniformization import dominating_rate, sample_piecewise_poisson


def _check_rates(rates):
    rates = np.array(rates, dtype=float).reshape(-1)
    if np.any(rates < 0) or not np.all(np.isfinite(rates)):
        raise ModelError("emission rates must be finite and nonnegative")
    return rates


@dataclass(frozen=True)
class MmppModel:
    A: np.ndarray
    pi0: np.ndarray
    rates: np.ndarray

    def __post_init__(self):
        A = as_generator(self.A)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "pi0", as_distribution(self.pi0, A.shape[0]))
        rates = _check_rates(self.rates)
        if rates.size != A.shape[0]:
            raise ModelError("need one emission rate per state")
        object.__setattr__(self, "rates", rates)

    @property
    def n_states(self):
        return self.A.shape[0]


def count_log_likelihood(counts, widths, rates) -> np.ndarray:
    """``(n_windows, N)`` array of ``c log(rate) - rate * width`` with
    ``0 log 0 = 0`` and ``-inf`` for events under a zero rate."""
    counts = np.asarray(counts, dtype=float)[:, None]
    rates = np.asarray(rates, dtype=float)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        log_rates = np.log(rates)
        term = np.where(counts > 0, counts * log_rates, 0.0)
    return term - rates * np.asarray(widths, dtype=float)[:, None]


def mmpp_interval_log_likelihood(state, a, b, events, rates, closed=False) -> float:
    """Log-likelihood of the events in ``[a, b)`` given constant ``state``."""
    if not a < b:
        raise ModelError("window must have positive length")
    events = np.asarray(events, dtype=float)
    hi = np.searchsorted(events, b, side="right" if closed else "left")
    count = hi - np.searchsorted(events, a, side="left")
    return float(count_log_likelihood([count], [b - a], [rates[state]])[0, 0])


class PoissonObservations(ObservationModel):
    """Event times of an MMPP together with the per-state emission rates."""

    def __init__(self, event_times, rates):
        times = np.array(event_times, dtype=float).reshape(-1)
        if times.size and np.any(np.diff(times) < 0):
            raise ModelError("event times must be sorted")
        self.times = times
        self.rates = _check_rates(rates)
        self.n_states = self.rates.size

    def with_rates(self, rates) -> "PoissonObservations":
        return PoissonObservations(self.times, rates)

    def window_counts(self, edges) -> np.ndarray:
        edges = np.asarray(edges, dtype=float)
        idx = np.searchsorted(self.times, edges, side="left")
        idx[-1] = np.searchsorted(self.times, edges[-1], side="right")
        return np.diff(idx)

    def window_log_likelihoods(self, edges):
        edges = np.asarray(edges, dtype=float)
        return count_log_likelihood(self.window_counts(edges), np.diff(edges), self.rates)


def mmpp_simulate(model: MmppModel, interval, rng):
    """Latent path by Gillespie, then Poisson events piece by piece."""
    interval = TimeInterval.coerce(interval)
    traj = gillespie_sample(model.A, model.pi0, interval, rng)
    events = sample_piecewise_poisson(traj.breakpoints, model.rates[traj.all_states], rng)
    return traj, events


@dataclass(frozen=True)
class EmissionPrior:
    """Independent ``Gamma(shape_s, rate=rate_s)`` priors on emission rates."""

    shape: np.ndarray
    rate: np.ndarray

    @classmethod
    def default(cls, n_states):
        """Shape ``s + 1`` for 0-based state ``s``, unit scale."""
        return cls(np.arange(1, n_states + 1, dtype=float), np.ones(n_states))

    def __post_init__(self):
        shape = np.array(self.shape, dtype=float).reshape(-1)
        rate = np.broadcast_to(np.array(self.rate, dtype=float), shape.shape).copy()
        if np.any(shape <= 0) or np.any(rate <= 0):
            raise ModelError("emission prior parameters must be positive")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "rate", rate)


def emission_counts(traj: Trajectory, events, n_states) -> np.ndarray:
    """Number of events that fall while the path is in each state."""
    events = np.asarray(events, dtype=float)
    return np.bincount(traj.state_at(events), minlength=n_states)


def sample_emission_posterior(traj: Trajectory, events, prior: EmissionPrior, rng) -> np.ndarray:
    n = prior.shape.size
    counts = emission_counts(traj, events, n)
    dwell = sufficient_stats(traj, n).dwell_time
    return rng.gamma(prior.shape + counts, 1.0 / (prior.rate + dwell))


@dataclass(frozen=True)
class MmppSample:
    A: np.ndarray
    rates: np.ndarray
    stats: object


def mmpp_bayes_chain(events, n_states, interval, config: GibbsConfig, rate_prior: RatePrior,
                     emission_prior: EmissionPrior | None = None, mode=None,
                     A_init=None, rates_init=None, rng=None):
    """Joint posterior over path, rate matrix and emission rates.

    Sweep order: path (uniformization kernel), ``A`` (conjugate, MH-corrected
    in stationary mode), emission rates (conjugate).
    """
    interval = TimeInterval.coerce(interval)
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    if emission_prior is None:
        emission_prior = EmissionPrior.default(n_states)
    if mode is None:
        mode = InitialDistMode.fixed(np.full(n_states, 1.0 / n_states))
    A = sample_rate_posterior(empty_stats(n_states), rate_prior, rng) if A_init is None \
        else np.asarray(A_init, dtype=float)
    rates = rng.gamma(emission_prior.shape, 1.0 / emission_prior.rate) if rates_init is None \
        else _check_rates(rates_init)
    obs = PoissonObservations(events, rates)
    traj = initial_trajectory(A, mode.pi0_for(A), obs, interval, rng)
    for i in range(config.n_burnin + config.n_samples):
        omega = dominating_rate(A, config.omega_multiplier)
        traj = gibbs_kernel(traj, A, mode.pi0_for(A), obs, omega, rng)
        A, _ = mh_rate_update(A, traj, rate_prior, mode, rng)
        rates = sample_emission_posterior(traj, obs.times, emission_prior, rng)
        obs = obs.with_rates(rates)
        if i >= config.n_burnin:
            yield MmppSample(A, rates, sufficient_stats(traj, n_states))


def write_events_csv(events, fh=None) -> str:
    buf = io.StringIO()
    buf.write("time\n")
    for t in np.asarray(events, dtype=float):
        buf.write(f"{t:.17g}\n")
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def read_events_csv(fh) -> np.ndarray:
    rows = [r for r in csv.reader(fh) if r]
    if not rows or [c.strip() for c in rows[0]] != ["time"]:
        raise ModelError("event CSV must have the single header 'time'")
    try:
        times = np.array([float(r[0]) for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ModelError(f"malformed event CSV: {exc}") from None
    if not np.all(np.isfinite(times)) or np.any(np.diff(times) < 0):
        raise ModelError("event times must be finite and sorted ascending")
    return times
