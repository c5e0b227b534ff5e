"""MCMC diagnostics and exact small-instance oracles.

The oracles here are deliberately independent of the sampler code paths: they
use matrix exponentials, brute-force enumeration or numerical integration
rather than uniformization and FFBS.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import sparse, stats
from scipy.sparse.linalg import expm_multiply

from .errors import ImpossibleObservationsError, ModelError

ORACLE_MAX_STATES = 16

# Pade coefficients and 1-norm bounds (Higham 2005, double precision).
_PADE = {
    3: (1.495585217958292e-2, [120.0, 60.0, 12.0, 1.0]),
    5: (2.539398330063230e-1, [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0]),
    7: (9.504178996162932e-1, [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0,
                               1512.0, 56.0, 1.0]),
    9: (2.097847961257068e0, [17643225600.0, 8821612800.0, 2075673600.0, 302702400.0,
                              30270240.0, 2162160.0, 110880.0, 3960.0, 90.0, 1.0]),
}
_THETA13 = 5.371920351148152
_B13 = [64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
        33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0]


def _pade_low(A, b):
    n = A.shape[0]
    ident = np.eye(n)
    powers = [ident, A @ A]
    m = len(b) - 1
    while len(powers) < (m + 1) // 2:
        powers.append(powers[-1] @ powers[1])
    U = sum(b[2 * j + 1] * powers[j] for j in range((m + 1) // 2))
    U = A @ U
    V = sum(b[2 * j] * powers[j] for j in range((m + 1) // 2))
    return U, V


def _pade13(A):
    b = _B13
    ident = np.eye(A.shape[0])
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A4 @ A2
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    return U, V


def _is_generator(A):
    off = A - np.diag(np.diagonal(A))
    return np.all(off >= 0) and np.allclose(A.sum(axis=0), 0.0, atol=1e-9)


def matrix_exponential(A, t=1.0) -> np.ndarray:
    """``exp(A t)`` by scaling and squaring with a diagonal Pade approximant.

    For rate matrices the result is cleaned up to be column-stochastic:
    rounding negatives above ``-1e-12`` are clipped to zero.
    """
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise ModelError("matrix exponential needs finite entries")
    X = A * float(t)
    norm = np.abs(X).sum(axis=0).max() if X.size else 0.0
    squarings = 0
    for m, (theta, b) in _PADE.items():
        if norm <= theta:
            U, V = _pade_low(X, b)
            break
    else:
        if norm > _THETA13:
            squarings = int(max(0, math.ceil(math.log2(norm / _THETA13))))
        X = X / (2.0 ** squarings)
        U, V = _pade13(X)
    R = np.linalg.solve(V - U, V + U)
    for _ in range(squarings):
        R = R @ R
    if _is_generator(A):
        R[(R < 0) & (R >= -1e-12)] = 0.0
    return R


def bridge_marginal(A, start, end, t, total):
    """``p(S(t) = . | S(0) = start, S(total) = end)`` from exp(A t) products."""
    left = matrix_exponential(A, t)[:, start]
    right = matrix_exponential(A, total - t)[end, :]
    w = left * right
    return w / w.sum()


def _obs_points(obs, t_start, t_end):
    times = np.asarray(obs.times, dtype=float) if obs is not None else np.empty(0)
    if times.size and (times.min() < t_start or (t_end is not None and times.max() > t_end)):
        raise ModelError("observation outside the interval")
    return times


def exact_smoothed_marginals(A, pi0, obs, query_times, t_start=0.0) -> np.ndarray:
    """Posterior state marginals at ``query_times`` given discrete observations.

    Forward-backward over the sorted union of observation and query times,
    with ``exp(A dt)`` as the transition between consecutive points.
    ``obs`` needs ``times`` and a ``(n_obs, N)`` ``log_likelihoods`` array.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n > ORACLE_MAX_STATES:
        raise ModelError(f"oracle limited to {ORACLE_MAX_STATES} states")
    query = np.asarray(query_times, dtype=float).reshape(-1)
    if query.size and query.min() < t_start:
        raise ModelError("query time before t_start")
    obs_t = _obs_points(obs, t_start, None)
    points = np.unique(np.concatenate(([t_start], obs_t, query)))
    loglik = np.zeros((points.size, n))
    if obs_t.size:
        np.add.at(loglik, np.searchsorted(points, obs_t), obs.log_likelihoods)
    shift = loglik.max(axis=1, keepdims=True)
    if np.any(~np.isfinite(shift)):
        raise ImpossibleObservationsError("observation impossible under every state")
    lik = np.exp(loglik - shift)
    trans = [matrix_exponential(A, dt) for dt in np.diff(points)]

    fwd = np.empty((points.size, n))
    a = np.asarray(pi0, dtype=float) * lik[0]
    for j in range(points.size):
        if j:
            a = (trans[j - 1] @ fwd[j - 1]) * lik[j]
        z = a.sum()
        if not z > 0:
            raise ImpossibleObservationsError("observations have zero probability")
        fwd[j] = a / z
    bwd = np.empty((points.size, n))
    bwd[-1] = 1.0
    for j in range(points.size - 2, -1, -1):
        b = trans[j].T @ (bwd[j + 1] * lik[j + 1])
        bwd[j] = b / b.sum()
    post = fwd * bwd
    post /= post.sum(axis=1, keepdims=True)
    return post[np.searchsorted(points, query)]


def expected_path_statistics(A, start_weights, end_weights, total_time, n_grid=2001):
    """Posterior expected dwell times and transition counts ``[to, from]`` for
    an MJP on ``[0, total_time]`` with ``p(S(0)) ~ start_weights`` and end
    likelihood ``end_weights``, by Simpson quadrature of
    ``f(t)_s b(t)_s`` and ``f(t)_s A[s', s] b(t)_s'``.

    ``A`` may be a scipy sparse matrix; only matrix-vector exponentials are
    formed, so this scales to a few thousand states.
    """
    if n_grid % 2 == 0:
        n_grid += 1
    A = sparse.csc_matrix(A)
    f0 = np.asarray(start_weights, dtype=float)
    b0 = np.asarray(end_weights, dtype=float)
    fwd = expm_multiply(A, f0, start=0.0, stop=total_time, num=n_grid, endpoint=True)
    bwd = expm_multiply(A.T.tocsc(), b0, start=0.0, stop=total_time, num=n_grid,
                        endpoint=True)[::-1]
    h = total_time / (n_grid - 1)
    w = np.ones(n_grid)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= h / 3.0
    evidence = float(fwd[-1] @ b0)
    if not evidence > 0:
        raise ImpossibleObservationsError("endpoint data has zero probability")
    dwell = (w[:, None] * fwd * bwd).sum(axis=0) / evidence
    coo = A.tocoo()
    off = coo.row != coo.col
    rows, cols, vals = coo.row[off], coo.col[off], coo.data[off]
    trans = np.empty(rows.size)
    chunk = max(1, 4_000_000 // n_grid)
    for lo in range(0, rows.size, chunk):
        sl = slice(lo, lo + chunk)
        trans[sl] = w @ (fwd[:, cols[sl]] * bwd[:, rows[sl]])
    trans *= vals / evidence
    return dwell, sparse.coo_matrix((trans, (rows, cols)), shape=A.shape)


def enumerate_hmm_posterior(pi0, matrices, log_likelihoods):
    """Brute-force posterior over all ``N**(T+1)`` state sequences.

    ``matrices`` is a list of ``T`` column-stochastic matrices (step t -> t+1).
    Returns ``(paths, probabilities, log_marginal)``.
    """
    ll = np.asarray(log_likelihoods, dtype=float)
    n_steps, n = ll.shape
    paths = np.array(list(itertools.product(range(n), repeat=n_steps)), dtype=np.int64)
    logp = np.log(np.asarray(pi0, dtype=float))[paths[:, 0]] + ll[0, paths[:, 0]]
    with np.errstate(divide="ignore"):
        for t in range(n_steps - 1):
            B = np.asarray(matrices[t], dtype=float)
            logp = logp + np.log(B[paths[:, t + 1], paths[:, t]]) + ll[t + 1, paths[:, t + 1]]
    top = logp.max()
    if not np.isfinite(top):
        raise ImpossibleObservationsError("every path has zero probability")
    w = np.exp(logp - top)
    z = w.sum()
    return paths, w / z, float(top + np.log(z))


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p, float) - np.asarray(q, float)).sum())


def empirical_distribution(samples, n_states) -> np.ndarray:
    counts = np.bincount(np.asarray(samples, dtype=np.int64), minlength=n_states)
    return counts / counts.sum()


class GofResult(NamedTuple):
    statistic: float
    pvalue: float


def chisquare_gof(observed_counts, expected_probs, min_expected=5.0):
    """Chi-square goodness of fit, pooling cells with small expected counts."""
    obs = np.asarray(observed_counts, dtype=float)
    probs = np.asarray(expected_probs, dtype=float)
    zero = probs <= 0
    if np.any(obs[zero] > 0):
        return GofResult(np.inf, 0.0)
    obs, probs = obs[~zero], probs[~zero]
    exp = probs / probs.sum() * obs.sum()
    order = np.argsort(exp)
    small = exp[order] < min_expected
    pooled_obs = obs[order][~small].tolist()
    pooled_exp = exp[order][~small].tolist()
    if small.any():
        pooled_obs.append(obs[order][small].sum())
        pooled_exp.append(exp[order][small].sum())
    if pooled_exp and pooled_exp[-1] < min_expected and len(pooled_exp) > 1:
        pooled_obs[-2] += pooled_obs.pop()
        pooled_exp[-2] += pooled_exp.pop()
    return stats.chisquare(pooled_obs, pooled_exp)


def batch_means_se(samples, n_batches=20):
    """Monte Carlo standard error of the mean by non-overlapping batch means."""
    x = np.asarray(samples, dtype=float)
    n = x.shape[0] // n_batches * n_batches
    if n == 0:
        raise ModelError("not enough samples for batch means")
    x = x[x.shape[0] - n:]
    means = x.reshape((n_batches, n // n_batches) + x.shape[1:]).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(n_batches)


def _autocorrelation(x):
    n = x.size
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x - x.mean(), size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n]
    return acov / acov[0]


def effective_sample_size(series, return_flag=False):
    """ESS by Geyer's initial positive sequence estimator.

    A zero-variance series gets ESS equal to its length; with
    ``return_flag=True`` the result is ``(ess, is_constant)``.
    """
    x = np.asarray(series, dtype=float).reshape(-1)
    n = x.size
    if n < 10:
        raise ModelError("ESS needs at least 10 samples")
    if np.all(x == x[0]) or np.ptp(x) <= 1e-14 * max(1.0, np.abs(x).max()):
        return (float(n), True) if return_flag else float(n)
    rho = _autocorrelation(x)
    n_pairs = n // 2
    pairs = rho[: 2 * n_pairs].reshape(n_pairs, 2).sum(axis=1)
    stop = np.flatnonzero(pairs <= 0)
    k = stop[0] if stop.size else n_pairs
    tau = -1.0 + 2.0 * pairs[:k].sum()
    ess = float(min(n, n / tau)) if tau > 0 else float(n)
    return (ess, False) if return_flag else ess


@dataclass
class EssReport:
    per_statistic: list
    median_ess: float
    wall_time: float
    ess_per_second: float
    constant_statistics: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def ess_report(samples, wall_time) -> EssReport:
    """ESS of every column of ``samples`` and their median."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    values, constant = [], []
    for j in range(x.shape[1]):
        e, flag = effective_sample_size(x[:, j], return_flag=True)
        values.append(e)
        if flag:
            constant.append(j)
    med = float(np.median(values))
    return EssReport(values, med, float(wall_time),
                     med / wall_time if wall_time > 0 else float("inf"), constant)


@dataclass
class RelativeErrorReport:
    per_statistic: list
    total: float
    excluded: list = field(default_factory=list)

    @property
    def avg_relative_error(self) -> float:
        return self.total

    def to_json(self) -> str:
        d = asdict(self)
        d["avg_relative_error"] = self.total
        return json.dumps(d, indent=2, sort_keys=True)


def average_relative_error(estimates, references) -> RelativeErrorReport:
    """``sum_j |est_j - ref_j| / ref_j`` over statistics with ``ref_j > 0``.

    Statistics whose reference is zero are skipped and listed in
    ``excluded``; their per-statistic entry is NaN.
    """
    est = np.asarray(estimates, dtype=float).reshape(-1)
    ref = np.asarray(references, dtype=float).reshape(-1)
    if est.shape != ref.shape:
        raise ModelError("estimates and references differ in length")
    keep = ref > 0
    if not keep.any():
        raise ModelError("all reference values are zero")
    rel = np.full(ref.shape, np.nan)
    rel[keep] = np.abs(est[keep] - ref[keep]) / ref[keep]
    return RelativeErrorReport(rel.tolist(), float(rel[keep].sum()),
                               np.flatnonzero(~keep).tolist())
