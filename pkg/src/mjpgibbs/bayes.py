"""Conjugate Bayesian updates for the rate matrix.

Each column of ``A`` is parameterized by its exit rate ``|A_s|`` and the jump
distribution ``p[., s]`` over the other states, with independent priors
``|A_s| ~ Gamma(alpha1, rate=alpha2)`` and ``p[., s] ~ Dirichlet(beta)``.
Given a path, the posterior is again gamma times Dirichlet in terms of the
dwell times and transition counts.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .core import (SufficientStats, TimeInterval, Trajectory, as_distribution,
                   sufficient_stats)
from .errors import ModelError
from .gibbs import GibbsConfig, gibbs_kernel, initial_trajectory
from .uniformization import dominating_rate

NULLSPACE_TOL = 1e-9


@dataclass(frozen=True)
class RatePrior:
    alpha1: float = 1.0
    alpha2: float = 1.0
    beta: float | np.ndarray = 1.0

    def __post_init__(self):
        if not (self.alpha1 > 0 and self.alpha2 > 0):
            raise ModelError("gamma hyperparameters must be positive")
        if np.any(np.asarray(self.beta, dtype=float) <= 0):
            raise ModelError("Dirichlet concentration must be positive")

    def concentration(self, n_states) -> np.ndarray:
        """``(N, N)`` matrix ``beta[to, from]`` with zero diagonal."""
        beta = np.asarray(self.beta, dtype=float)
        if beta.ndim == 0:
            out = np.full((n_states, n_states), float(beta))
        elif beta.shape == (n_states, n_states):
            out = beta.copy()
        else:
            raise ModelError(f"beta must be a scalar or a {n_states}x{n_states} matrix")
        np.fill_diagonal(out, 0.0)
        return out


@dataclass(frozen=True)
class PosteriorParameters:
    shape: np.ndarray          # gamma shape per source state
    rate: np.ndarray           # gamma rate per source state
    concentration: np.ndarray  # Dirichlet parameters [to, from], zero diagonal


def posterior_parameters(stats: SufficientStats, prior: RatePrior) -> PosteriorParameters:
    counts = np.asarray(stats.transition_counts, dtype=float)
    n = counts.shape[0]
    off = counts.copy()
    np.fill_diagonal(off, 0.0)
    return PosteriorParameters(prior.alpha1 + off.sum(axis=0),
                               prior.alpha2 + np.asarray(stats.dwell_time, dtype=float),
                               prior.concentration(n) + off)


def empty_stats(n_states) -> SufficientStats:
    return SufficientStats(np.zeros(n_states), np.zeros((n_states, n_states), dtype=np.int64))


def sample_dirichlet(alpha, rng) -> np.ndarray:
    """Dirichlet draw via log-gamma variates.

    Gamma(a) for ``a < 1`` is drawn as ``Gamma(a + 1) * U**(1/a)`` in log space,
    which keeps tiny components from rounding to exactly zero.
    """
    alpha = np.asarray(alpha, dtype=float)
    logg = np.log(rng.gamma(alpha + 1.0)) + np.log(rng.random(alpha.shape)) / alpha
    logg -= logg.max()
    w = np.exp(logg)
    return w / w.sum()


def sample_rate_posterior(stats: SufficientStats, prior: RatePrior, rng) -> np.ndarray:
    """Draw ``A`` from its conjugate posterior given path statistics."""
    post = posterior_parameters(stats, prior)
    n = post.shape.size
    A = np.zeros((n, n))
    if n == 1:
        return A
    exit = rng.gamma(post.shape, 1.0 / post.rate)
    off = ~np.eye(n, dtype=bool)
    alpha = post.concentration.T[off.T]  # column-major so each source is contiguous
    logg = np.log(rng.gamma(alpha + 1.0)) + np.log(rng.random(alpha.size)) / alpha
    logg = logg.reshape(n, n - 1)
    w = np.exp(logg - logg.max(axis=1, keepdims=True))
    A.T[off.T] = (w * (exit / w.sum(axis=1))[:, None]).ravel()
    np.fill_diagonal(A, -A.sum(axis=0))
    return A


def stationary_distribution(A) -> np.ndarray:
    """Unique ``pi`` with ``A @ pi = 0``, ``pi >= 0``, ``sum(pi) = 1``."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n == 1:
        return np.ones(1)
    scale = max(1.0, float(np.abs(A).max()))
    sv = np.linalg.svd(A / scale, compute_uv=False)
    if np.sum(sv <= NULLSPACE_TOL) > 1:
        raise ModelError("rate matrix has more than one stationary distribution")
    M = np.vstack((A / scale, np.ones((1, n))))
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi = np.linalg.lstsq(M, rhs, rcond=None)[0]
    pi[pi < 0] = 0.0
    pi /= pi.sum()
    if np.abs(A @ pi).max() > NULLSPACE_TOL * scale:
        raise ModelError("stationary distribution failed its residual check")
    return pi


class InitialDistMode:
    """How ``pi0`` relates to ``A``: a fixed vector or the stationary law of ``A``."""

    def __init__(self, kind, pi0=None):
        if kind not in ("fixed", "stationary"):
            raise ModelError(f"unknown initial distribution mode {kind!r}")
        if (kind == "fixed") != (pi0 is not None):
            raise ModelError("fixed mode needs pi0; stationary mode takes none")
        self.kind = kind
        self.pi0 = None if pi0 is None else as_distribution(pi0)
        self._memo = {}

    @classmethod
    def fixed(cls, pi0):
        return cls("fixed", pi0)

    @classmethod
    def stationary(cls):
        return cls("stationary")

    def pi0_for(self, A) -> np.ndarray:
        if self.kind == "fixed":
            return self.pi0
        # a sweep asks for the same A up to three times; keep the last two
        key = np.asarray(A, dtype=float).tobytes()
        pi = self._memo.get(key)
        if pi is None:
            pi = stationary_distribution(A)
            if len(self._memo) >= 2:
                self._memo.pop(next(iter(self._memo)))
            self._memo[key] = pi
        return pi

    def __repr__(self):
        return f"InitialDistMode({self.kind!r})"


def mh_rate_update(A, traj: Trajectory, prior: RatePrior, mode: InitialDistMode, rng):
    """Update ``A`` given a path.  Returns ``(A_new, accepted)``.

    In stationary mode the conjugate draw ignores the ``pi0(s0)`` factor and
    is corrected with acceptance probability ``min(1, pi_new(s0) / pi_old(s0))``.
    """
    n = np.asarray(A).shape[0]
    proposal = sample_rate_posterior(sufficient_stats(traj, n), prior, rng)
    if mode.kind == "fixed":
        return proposal, True
    pi_new = mode.pi0_for(proposal)[traj.s0]
    pi_old = mode.pi0_for(A)[traj.s0]
    if pi_new >= pi_old or rng.random() * pi_old < pi_new:
        return proposal, True
    return np.asarray(A, dtype=float), False


@dataclass(frozen=True)
class BayesSample:
    A: np.ndarray
    stats: SufficientStats
    accepted: bool


def full_bayes_chain(obs, prior: RatePrior, mode: InitialDistMode, config: GibbsConfig,
                     n_states, interval, A_init=None, init=None, rng=None):
    """Generator of post-burn-in :class:`BayesSample` from the joint posterior
    of path and rate matrix.

    Each sweep moves the path with the uniformization kernel at the current
    ``A`` (``omega`` recomputed from ``A``), then redraws ``A`` given the path.
    """
    interval = TimeInterval.coerce(interval)
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    A = sample_rate_posterior(empty_stats(n_states), prior, rng) if A_init is None \
        else np.asarray(A_init, dtype=float)
    traj = init
    if traj is None:
        traj = initial_trajectory(A, mode.pi0_for(A), obs, interval, rng)
    for i in range(config.n_burnin + config.n_samples):
        omega = dominating_rate(A, config.omega_multiplier)
        traj = gibbs_kernel(traj, A, mode.pi0_for(A), obs, omega, rng)
        A, accepted = mh_rate_update(A, traj, prior, mode, rng)
        if i >= config.n_burnin:
            yield BayesSample(A, sufficient_stats(traj, n_states), accepted)


def off_diagonal(A) -> np.ndarray:
    """Off-diagonal entries, row-major over ``(to, from)``."""
    A = np.asarray(A)
    return A[~np.eye(A.shape[0], dtype=bool)]


def write_posterior_csv(samples, n_states, fh=None) -> str:
    """One row per sweep: off-diagonal rates, dwell times, total transitions."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    pairs = [(i, j) for i in range(n_states) for j in range(n_states) if i != j]
    w.writerow([f"a_{i}_{j}" for i, j in pairs]
               + [f"dwell_{s}" for s in range(n_states)] + ["n_transitions", "accepted"])
    for smp in samples:
        w.writerow([f"{x:.17g}" for x in off_diagonal(smp.A)]
                   + [f"{x:.17g}" for x in smp.stats.dwell_time]
                   + [smp.stats.n_transitions, int(smp.accepted)])
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text
