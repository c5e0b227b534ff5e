"""Uniformized representation of an MJP path.

A path is redrawn as a discrete chain with transition matrix
``B = I + A / omega`` run on the events of a rate-``omega`` Poisson process.
Events at which the chain stays put are *virtual* jumps.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import (TimeInterval, Trajectory, _frozen, as_distribution, as_generator,
                   max_exit_rate)
from .errors import ModelError

DEFAULT_K = 2.0


def dominating_rate(A, k=DEFAULT_K) -> float:
    """``k * max_s |A_s|``; zero for the zero generator (nothing can jump)."""
    if not k >= 1:
        raise ModelError(f"omega multiplier must be >= 1, got {k}")
    return float(k) * max_exit_rate(A)


def _check_omega(A, omega, strict):
    top = max_exit_rate(A)
    if top == 0.0 and omega >= 0.0:
        return
    if strict and not omega > top:
        raise ModelError(f"omega={omega} must exceed max exit rate {top} for irreducibility")
    if not omega >= top:
        raise ModelError(f"omega={omega} is below the max exit rate {top}")


def subordinated_transition_matrix(A, omega) -> np.ndarray:
    """Column-stochastic ``B = I + A / omega``."""
    A = np.asarray(A, dtype=float)
    _check_omega(A, omega, strict=False)
    n = A.shape[0]
    if omega == 0.0:
        return np.eye(n)
    B = np.eye(n) + A / omega
    np.clip(B, 0.0, None, out=B)
    # restore exact column sums after clipping the rounding residue
    diag = 1.0 - (B.sum(axis=0) - np.diagonal(B))
    B[np.diag_indices(n)] = np.clip(diag, 0.0, None)
    return B


@dataclass(frozen=True)
class UniformizedPath:
    """``(v0, states, times)`` where self-transitions are allowed."""

    v0: int
    times: np.ndarray
    states: np.ndarray
    interval: TimeInterval
    omega: float

    def __post_init__(self):
        times = np.array(self.times, dtype=float).reshape(-1)
        states = np.array(self.states, dtype=np.int64).reshape(-1)
        interval = TimeInterval.coerce(self.interval)
        if times.shape != states.shape:
            raise ModelError("grid times and states must have equal length")
        if times.size and (times[0] <= interval.start or times[-1] > interval.end
                           or np.any(np.diff(times) <= 0)):
            raise ModelError("grid times must be strictly increasing inside the interval")
        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "states", _frozen(states))
        object.__setattr__(self, "interval", interval)
        object.__setattr__(self, "v0", int(self.v0))
        object.__setattr__(self, "omega", float(self.omega))


@dataclass(frozen=True)
class VirtualJumps:
    times: np.ndarray
    states: np.ndarray
    omega: float


def sample_piecewise_poisson(breaks, rates, rng) -> np.ndarray:
    """Sorted event times of a Poisson process with rate ``rates[i]`` on
    ``[breaks[i], breaks[i+1])``."""
    breaks = np.asarray(breaks, dtype=float)
    widths = np.diff(breaks)
    mean = np.clip(np.asarray(rates, dtype=float), 0.0, None) * widths
    counts = rng.poisson(mean)
    total = int(counts.sum())
    if total == 0:
        return np.empty(0)
    seg = np.repeat(np.arange(widths.size), counts)
    times = breaks[seg] + widths[seg] * rng.random(total)
    times.sort()
    return times


@dataclass(frozen=True)
class UniformizedBatch:
    """``n`` independent uniformized paths in flat arrays.

    Path ``i`` owns ``times[offsets[i]:offsets[i+1]]`` and the matching
    ``states``; its initial state is ``v0[i]``.
    """

    v0: np.ndarray
    offsets: np.ndarray
    times: np.ndarray
    states: np.ndarray
    interval: TimeInterval
    omega: float

    def __len__(self):
        return self.v0.size

    def path(self, i) -> UniformizedPath:
        sl = slice(self.offsets[i], self.offsets[i + 1])
        return UniformizedPath(self.v0[i], self.times[sl], self.states[sl], self.interval,
                               self.omega)

    def grid_sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def final_states(self) -> np.ndarray:
        """State at ``t_end``; thinning never changes it."""
        sizes = self.grid_sizes()
        out = self.v0.copy()
        has = sizes > 0
        out[has] = self.states[self.offsets[1:][has] - 1]
        return out

    def jump_counts(self) -> np.ndarray:
        """Number of real (non-virtual) jumps of each path after thinning."""
        prev = np.empty_like(self.states)
        if self.states.size:
            prev[1:] = self.states[:-1]
            starts = self.offsets[:-1][self.grid_sizes() > 0]
            prev[starts] = self.v0[self.grid_sizes() > 0]
        owner = np.repeat(np.arange(len(self)), self.grid_sizes())
        return np.bincount(owner[self.states != prev], minlength=len(self))


def sample_uniformized_batch(A, pi0, interval, omega, rng, n) -> UniformizedBatch:
    """``n`` independent draws of the uniformized construction."""
    A = as_generator(A)
    pi0 = as_distribution(pi0, A.shape[0])
    interval = TimeInterval.coerce(interval)
    B = subordinated_transition_matrix(A, omega)
    counts = rng.poisson(omega * interval.length, size=n)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    total = int(offsets[-1])
    # sort each path's uniforms by sorting (owner, u) pairs in one pass
    owner = np.repeat(np.arange(n), counts)
    u = rng.random(total)
    times = interval.start + interval.length * u[np.lexsort((u, owner))]
    cum_pi = np.cumsum(pi0)
    v0 = np.minimum(np.searchsorted(cum_pi, rng.random(n) * cum_pi[-1], side="right"),
                    pi0.size - 1).astype(np.int64)
    cum_B = np.ascontiguousarray(np.cumsum(B, axis=0))
    walk = rng.random(total)
    states = np.empty(total, dtype=np.int64)
    walk_chain = kernels.active.walk_chain
    for i in np.flatnonzero(counts):
        sl = slice(offsets[i], offsets[i + 1])
        states[sl] = walk_chain(cum_B, v0[i], walk[sl])
    return UniformizedBatch(v0, offsets, times, states, interval, float(omega))


def sample_uniformized(A, pi0, interval, omega, rng) -> UniformizedPath:
    """Poisson(``omega``) grid on the interval, chain with matrix ``B`` on it."""
    return sample_uniformized_batch(A, pi0, interval, omega, rng, 1).path(0)


def thin(path: UniformizedPath) -> Trajectory:
    """Drop the virtual jumps."""
    seq = np.concatenate(([path.v0], path.states))
    keep = seq[1:] != seq[:-1]
    return Trajectory(path.v0, path.times[keep], path.states[keep], path.interval)


def sample_virtual_jumps(traj: Trajectory, A, omega, rng, strict=True) -> VirtualJumps:
    """Virtual jump times given the path: Poisson with rate ``omega - |A_s|``
    while the path sits in ``s``.

    ``strict=False`` allows ``omega == max |A_s|``, which breaks
    irreducibility of the Gibbs chain; it exists for demonstrating that.
    """
    A = np.asarray(A, dtype=float)
    _check_omega(A, omega, strict)
    seq = traj.all_states
    rates = omega + np.diagonal(A)[seq]
    times = sample_piecewise_poisson(traj.breakpoints, rates, rng)
    return VirtualJumps(times, traj.state_at(times), float(omega))


def augment(traj: Trajectory, virtual: VirtualJumps) -> UniformizedPath:
    """Merge real and virtual jumps into one grid."""
    if virtual.times.size and np.any(traj.state_at(virtual.times) != virtual.states):
        raise ModelError("virtual jump states are not compatible with the trajectory")
    times = np.concatenate((traj.times, virtual.times))
    order = np.argsort(times, kind="stable")
    times = times[order]
    if np.any(np.diff(times) == 0):
        raise ModelError("duplicate grid time while merging virtual jumps")
    states = np.concatenate((traj.states, virtual.states))[order]
    return UniformizedPath(traj.s0, times, states, traj.interval, virtual.omega)
