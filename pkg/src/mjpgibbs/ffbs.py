"""Forward-filtering backward-sampling for finite discrete-time chains.

Transition matrices are column-stochastic: ``B[s_next, s_prev]``.  The chain
may be inhomogeneous; step ``t -> t+1`` uses ``transitions[index[t]]`` so that
a few distinct matrices can be shared by a long chain.  Likelihoods are given
in log space and the forward pass keeps normalized vectors plus a running log
normalizer, so long chains with tiny likelihoods do not underflow.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import as_distribution
from .errors import ImpossibleObservationsError, ModelError

STOCHASTIC_TOL = 1e-12
SPARSE_ZERO_FRACTION = 0.9


def _to_csc(stack):
    """Stacked CSC layout consumed by ``forward_filter_csc``."""
    m, n, _ = stack.shape
    mat, col, row = np.nonzero(stack.transpose(0, 2, 1))
    data = np.ascontiguousarray(stack[mat, row, col])
    ends = np.cumsum(np.bincount(mat * n + col, minlength=m * n)).reshape(m, n)
    indptr = np.empty((m, n + 1), dtype=np.int64)
    indptr[:, 1:] = ends
    indptr[:, 0] = np.concatenate(([0], ends[:-1, -1]))
    return indptr, row.astype(np.int64), data


@dataclass(frozen=True)
class HmmProblem:
    """Initial distribution, per-step transitions and ``(T+1, N)`` log-likelihoods."""

    pi0: np.ndarray
    transitions: np.ndarray
    index: np.ndarray
    log_likelihoods: np.ndarray
    sparse: bool = False

    def __post_init__(self):
        ll = np.ascontiguousarray(self.log_likelihoods, dtype=float)
        if ll.ndim != 2:
            raise ModelError("log-likelihoods must be a (T+1, N) array")
        n_steps, n = ll.shape
        pi0 = as_distribution(self.pi0, n)
        stack = np.ascontiguousarray(self.transitions, dtype=float)
        if stack.ndim == 2:
            stack = stack[None]
        if stack.shape[1:] != (n, n):
            raise ModelError(f"transition matrices must be {n}x{n}")
        if np.any(stack < 0) or np.any(np.abs(stack.sum(axis=1) - 1.0) > STOCHASTIC_TOL * n):
            raise ModelError("transition matrices must be column-stochastic")
        if np.any(np.isnan(ll)) or np.any(ll == np.inf):
            raise ModelError("log-likelihoods must be finite or -inf")
        index = self.index
        if index is None:
            index = np.zeros(n_steps - 1, dtype=np.int64)
        index = np.ascontiguousarray(index, dtype=np.int64)
        if index.shape != (n_steps - 1,):
            raise ModelError(f"expected {n_steps - 1} transition indices, got {index.shape}")
        if index.size and (index.min() < 0 or index.max() >= stack.shape[0]):
            raise ModelError("transition index out of range")
        object.__setattr__(self, "pi0", pi0)
        object.__setattr__(self, "transitions", stack)
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "log_likelihoods", ll)

    @classmethod
    def from_matrices(cls, pi0, matrices, log_likelihoods, sparse=None):
        """One matrix per step (a list of ``T`` matrices) or a single shared one."""
        mats = np.asarray(matrices, dtype=float)
        n_steps = np.asarray(log_likelihoods).shape[0]
        if mats.ndim == 2:
            index = np.zeros(n_steps - 1, dtype=np.int64)
        else:
            index = np.arange(mats.shape[0], dtype=np.int64)
        if sparse is None:
            sparse = mats.size > 0 and np.mean(mats == 0) >= SPARSE_ZERO_FRACTION
        return cls(pi0, mats, index, log_likelihoods, bool(sparse))

    @property
    def n_steps(self) -> int:
        return self.log_likelihoods.shape[0]

    @property
    def n_states(self) -> int:
        return self.log_likelihoods.shape[1]


@dataclass(frozen=True)
class HmmSample:
    states: np.ndarray
    log_marginal: float


def _forward(problem: HmmProblem, backend):
    if problem.sparse:
        indptr, indices, data = _to_csc(problem.transitions)
        out = backend.forward_filter_csc(problem.pi0, indptr, indices, data,
                                         problem.index, problem.log_likelihoods)
    else:
        out = backend.forward_filter(problem.pi0, problem.transitions,
                                     problem.index, problem.log_likelihoods)
    filtered, log_z, bad = out
    if bad >= 0:
        raise ImpossibleObservationsError(
            f"observations have zero probability (forward pass failed at step {bad})", step=bad)
    return filtered, float(log_z)


def forward_marginals(problem: HmmProblem, backend=None):
    """Filtered marginals ``p(S_t | O_0..O_t)`` for every step, and ``log p(O)``."""
    return _forward(problem, kernels.get(backend))


def ffbs_sample(problem: HmmProblem, rng, backend=None) -> HmmSample:
    """Exact draw of the whole state sequence from its posterior."""
    impl = kernels.get(backend)
    filtered, log_z = _forward(problem, impl)
    uniforms = rng.random(problem.n_steps)
    states = impl.backward_sample(filtered, problem.transitions, problem.index, uniforms)
    return HmmSample(states, log_z)


def ffbs_sample_many(problem: HmmProblem, rng, n_samples, backend=None) -> np.ndarray:
    """``(n_samples, T+1)`` independent posterior draws sharing one forward pass.

    Consumes the generator exactly like ``n_samples`` calls of
    :func:`ffbs_sample`.
    """
    impl = kernels.get(backend)
    filtered, _ = _forward(problem, impl)
    uniforms = rng.random((n_samples, problem.n_steps))
    out = np.empty((n_samples, problem.n_steps), dtype=np.int64)
    for i in range(n_samples):
        out[i] = impl.backward_sample(filtered, problem.transitions, problem.index, uniforms[i])
    return out
