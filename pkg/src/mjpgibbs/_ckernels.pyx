# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the FFBS and chain-walk loops (see _pykernels)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY
from scipy.linalg.cython_blas cimport dgemv

cnp.import_array()

NAME = "cython"

# below this size the plain loop beats a BLAS call
DENSE_BLAS_MIN = 24


cdef Py_ssize_t _categorical(double[::1] w, double u) noexcept nogil:
    cdef Py_ssize_t n = w.shape[0], s, last = -1
    cdef double total = 0.0, cum = 0.0, target
    for s in range(n):
        total += w[s]
    target = u * total
    for s in range(n):
        cum += w[s]
        if w[s] > 0.0:
            last = s
            if cum > target:
                return s
    return last


cdef double _normalize_step(double[::1] pred, const double[:] ll,
                            double[:] out) noexcept nogil:
    """Write the normalized filtered vector into ``out``; return log c + max
    or +inf when the step is impossible."""
    cdef Py_ssize_t n = pred.shape[0], s
    cdef double m = -INFINITY, c = 0.0, v
    for s in range(n):
        if ll[s] > m:
            m = ll[s]
    if m == -INFINITY or m != m:
        return INFINITY
    for s in range(n):
        v = pred[s] * exp(ll[s] - m)
        out[s] = v
        c += v
    if not c > 0.0:
        return INFINITY
    for s in range(n):
        out[s] = out[s] / c
    return log(c) + m


def forward_filter(const double[::1] pi0, const double[:, :, ::1] Bs,
                   const cnp.int64_t[::1] b_idx, const double[:, ::1] loglik):
    cdef Py_ssize_t n_steps = loglik.shape[0], n = loglik.shape[1]
    cdef Py_ssize_t t, i, j
    cdef double log_z = 0.0, lc, acc
    cdef Py_ssize_t bad = -1
    filtered_arr = np.empty((n_steps, n))
    cdef double[:, ::1] filtered = filtered_arr
    cdef double[::1] pred = np.array(pi0, dtype=np.float64)
    cdef const double[:, ::1] B
    cdef char trans = b'T'
    cdef int nn = <int>n, one = 1
    cdef double alpha = 1.0, beta = 0.0
    cdef bint blas = n >= DENSE_BLAS_MIN
    with nogil:
        for t in range(n_steps):
            lc = _normalize_step(pred, loglik[t], filtered[t])
            if lc == INFINITY:
                bad = t
                break
            log_z += lc
            if t + 1 < n_steps:
                B = Bs[b_idx[t]]
                if blas:
                    # row-major B is column-major B^T, so ask for (B^T)^T f
                    dgemv(&trans, &nn, &nn, &alpha, <double*>&B[0, 0], &nn,
                          &filtered[t, 0], &one, &beta, &pred[0], &one)
                    continue
                for i in range(n):
                    acc = 0.0
                    for j in range(n):
                        acc = acc + B[i, j] * filtered[t, j]
                    pred[i] = acc
    if bad >= 0:
        return filtered_arr, -np.inf, bad
    return filtered_arr, log_z, -1


def forward_filter_csc(const double[::1] pi0, const cnp.int64_t[:, ::1] indptr,
                       const cnp.int64_t[::1] indices, const double[::1] data,
                       const cnp.int64_t[::1] b_idx, const double[:, ::1] loglik):
    cdef Py_ssize_t n_steps = loglik.shape[0], n = loglik.shape[1]
    cdef Py_ssize_t t, s, p, m
    cdef double log_z = 0.0, lc, fs
    cdef Py_ssize_t bad = -1
    filtered_arr = np.empty((n_steps, n))
    cdef double[:, ::1] filtered = filtered_arr
    cdef double[::1] pred = np.array(pi0, dtype=np.float64)
    with nogil:
        for t in range(n_steps):
            lc = _normalize_step(pred, loglik[t], filtered[t])
            if lc == INFINITY:
                bad = t
                break
            log_z += lc
            if t + 1 < n_steps:
                m = b_idx[t]
                for s in range(n):
                    pred[s] = 0.0
                for s in range(n):
                    fs = filtered[t, s]
                    for p in range(indptr[m, s], indptr[m, s + 1]):
                        pred[indices[p]] += data[p] * fs
    if bad >= 0:
        return filtered_arr, -np.inf, bad
    return filtered_arr, log_z, -1


def backward_sample(const double[:, ::1] filtered, const double[:, :, ::1] Bs,
                    const cnp.int64_t[::1] b_idx, const double[::1] uniforms):
    cdef Py_ssize_t n_steps = filtered.shape[0], n = filtered.shape[1]
    cdef Py_ssize_t t, s, nxt
    states_arr = np.empty(n_steps, dtype=np.int64)
    cdef cnp.int64_t[::1] states = states_arr
    cdef double[::1] w = np.empty(n)
    with nogil:
        for s in range(n):
            w[s] = filtered[n_steps - 1, s]
        nxt = _categorical(w, uniforms[n_steps - 1])
        states[n_steps - 1] = nxt
        for t in range(n_steps - 2, -1, -1):
            for s in range(n):
                w[s] = filtered[t, s] * Bs[b_idx[t], nxt, s]
            nxt = _categorical(w, uniforms[t])
            states[t] = nxt
    return states_arr


def walk_chain(const double[:, ::1] cum_B, Py_ssize_t v0, const double[::1] uniforms):
    cdef Py_ssize_t n_steps = uniforms.shape[0], n = cum_B.shape[0]
    cdef Py_ssize_t i, j, v = v0
    cdef double target
    out_arr = np.empty(n_steps, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr
    with nogil:
        for i in range(n_steps):
            target = uniforms[i] * cum_B[n - 1, v]
            j = 0
            while j < n - 1 and cum_B[j, v] <= target:
                j += 1
            v = j
            out[i] = v
    return out_arr
