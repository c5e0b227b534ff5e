"""Pure NumPy implementations of the hot loops.

These mirror ``_ckernels.pyx`` operation for operation so that, given the same
pre-drawn uniforms, both backends return the same samples.
"""
import numpy as np

NAME = "python"


def _categorical(weights, u):
    cum = np.cumsum(weights)
    total = cum[-1]
    idx = int(np.searchsorted(cum, u * total, side="right"))
    if idx >= len(weights):
        idx = int(np.flatnonzero(weights > 0)[-1])
    return idx


def _normalize_step(pred, loglik_row):
    m = loglik_row.max()
    if not np.isfinite(m):
        return None, 0.0
    f = pred * np.exp(loglik_row - m)
    c = f.sum()
    if not c > 0.0:
        return None, 0.0
    return f / c, np.log(c) + m


def forward_filter(pi0, Bs, b_idx, loglik):
    """Filtered marginals for a chain whose step t uses ``Bs[b_idx[t]]``.

    Returns ``(filtered, log_marginal, bad_step)``; ``bad_step`` is -1 unless
    the observations are impossible, in which case it is the failing step.
    """
    n_steps, n = loglik.shape
    filtered = np.empty((n_steps, n))
    pred = np.asarray(pi0, dtype=float)
    log_z = 0.0
    for t in range(n_steps):
        f, lc = _normalize_step(pred, loglik[t])
        if f is None:
            return filtered, -np.inf, t
        filtered[t] = f
        log_z += lc
        if t + 1 < n_steps:
            pred = Bs[b_idx[t]] @ f
    return filtered, log_z, -1


def forward_filter_csc(pi0, indptr, indices, data, b_idx, loglik):
    """As :func:`forward_filter` with transition matrices in stacked CSC form.

    ``indptr[m, s]:indptr[m, s + 1]`` indexes the nonzeros of column ``s`` of
    matrix ``m`` inside the shared ``indices``/``data`` arrays.
    """
    n_steps, n = loglik.shape
    filtered = np.empty((n_steps, n))
    pred = np.asarray(pi0, dtype=float)
    log_z = 0.0
    for t in range(n_steps):
        f, lc = _normalize_step(pred, loglik[t])
        if f is None:
            return filtered, -np.inf, t
        filtered[t] = f
        log_z += lc
        if t + 1 < n_steps:
            ptr = indptr[b_idx[t]]
            lo, hi = ptr[0], ptr[-1]
            cols = np.repeat(np.arange(n), np.diff(ptr))
            pred = np.bincount(indices[lo:hi], weights=data[lo:hi] * f[cols],
                               minlength=n)
    return filtered, log_z, -1


def backward_sample(filtered, Bs, b_idx, uniforms):
    n_steps = filtered.shape[0]
    states = np.empty(n_steps, dtype=np.int64)
    nxt = _categorical(filtered[-1], uniforms[-1])
    states[-1] = nxt
    for t in range(n_steps - 2, -1, -1):
        w = filtered[t] * Bs[b_idx[t]][nxt]
        nxt = _categorical(w, uniforms[t])
        states[t] = nxt
    return states


def walk_chain(cum_B, v0, uniforms):
    """Run a discrete chain from ``v0``; ``cum_B[:, s]`` is the running sum of
    column ``s`` of a column-stochastic matrix."""
    out = np.empty(len(uniforms), dtype=np.int64)
    v = v0
    n = cum_B.shape[0]
    for i, u in enumerate(uniforms):
        col = cum_B[:, v]
        j = int(np.searchsorted(col, u * col[-1], side="right"))
        v = min(j, n - 1)
        out[i] = v
    return out
