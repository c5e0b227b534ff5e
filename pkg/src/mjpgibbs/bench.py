"""Timing suites: compiled vs fallback kernels, and sweep-cost scaling."""
from __future__ import annotations

import time

import numpy as np

from . import kernels
from .ctbn import (CtbnGibbsConfig, chain_model, ctbn_gibbs_sweep, ctbn_initial_trajectory,
                   lotka_volterra_model)
from .ffbs import HmmProblem, ffbs_sample
from .gibbs import DiscreteObservations, gibbs_kernel
from .core import gillespie_sample
from .experiments import mmpp_sweep_timing
from .uniformization import dominating_rate

MIN_REPEATS = 5


def _median_time(fn, repeats, inner):
    out = []
    for _ in range(max(repeats, MIN_REPEATS)):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        out.append((time.perf_counter() - t0) / inner)
    return float(np.median(out))


def _random_problem(n_states, n_steps, rng, sparse=False):
    if sparse:
        B = np.zeros((n_states, n_states))
        for s in range(n_states):
            for d in (-1, 0, 1):
                B[(s + d) % n_states, s] += 1.0 / 3.0
    else:
        B = rng.dirichlet(np.ones(n_states), size=n_states).T
    ll = rng.normal(size=(n_steps, n_states))
    return HmmProblem.from_matrices(np.full(n_states, 1.0 / n_states), B, ll, sparse=sparse)


def kernel_benchmark(sizes=((2, 1000), (5, 1000), (20, 1000), (50, 500), (200, 200)),
                     repeats=MIN_REPEATS, seed=0):
    """Median seconds per FFBS draw for each backend.

    Rows: ``case, n_states, n_steps, backend, seconds``.  Banded problems use the
    compressed-column path.
    """
    rng = np.random.default_rng(seed)
    rows = []
    cases = [("dense", n, t, False) for n, t in sizes]
    cases += [("banded", n, t, True) for n, t in sizes if n >= 20]
    for case, n, t, sparse in cases:
        problem = _random_problem(n, t, rng, sparse)
        inner = max(1, int(2e5 // (n * n * t if not sparse else 3 * n * t)))
        for backend in kernels.available():
            draw_rng = np.random.default_rng(seed)
            sec = _median_time(lambda: ffbs_sample(problem, draw_rng, backend), repeats, inner)
            rows.append({"case": case, "n_states": n, "n_steps": t, "backend": backend,
                         "seconds": sec})
    return rows


def sweep_benchmark(n_states=(2, 5, 20), repeats=MIN_REPEATS, seed=0, t_end=50.0):
    """Median seconds per Gibbs sweep on a discretely observed MJP, per backend."""
    rng = np.random.default_rng(seed)
    rows = []
    for n in n_states:
        A = rng.gamma(1.0, 1.0, size=(n, n))
        np.fill_diagonal(A, 0.0)
        np.fill_diagonal(A, -A.sum(axis=0))
        pi0 = np.full(n, 1.0 / n)
        truth = gillespie_sample(A, pi0, (0.0, t_end), rng)
        times = np.linspace(0.5, t_end - 0.5, 20)
        obs = DiscreteObservations.symmetric_noise(times, truth.state_at(times), n, 0.2)
        omega = dominating_rate(A, 2.0)
        for backend in kernels.available():
            previous = kernels.active
            kernels.use(backend)
            try:
                chain_rng = np.random.default_rng(seed)
                state = {"traj": truth}

                def step():
                    state["traj"] = gibbs_kernel(state["traj"], A, pi0, obs, omega, chain_rng)

                sec = _median_time(step, repeats, 20)
            finally:
                kernels.active = previous
            rows.append({"case": "gibbs_sweep", "n_states": n, "n_steps": 0,
                         "backend": backend, "seconds": sec})
    return rows


def add_speedups(rows):
    """Attach ``speedup`` = python seconds / backend seconds to each row."""
    ref = {(r["case"], r["n_states"], r["n_steps"]): r["seconds"]
           for r in rows if r["backend"] == "python"}
    for r in rows:
        r["speedup"] = ref[(r["case"], r["n_states"], r["n_steps"])] / r["seconds"]
    return rows


def mmpp_scaling(counts=(10, 30, 100, 300, 1000), repeats=MIN_REPEATS, seed=0):
    """Seconds per sweep against the number of Poisson events on ``[0, 10]``."""
    A = np.array([[-0.5, 1.0], [0.5, -1.0]])
    return mmpp_sweep_timing(A, [0.5, 0.5], [1.0, 5.0], (0.0, 10.0), counts=counts,
                             n_repeats=max(repeats, MIN_REPEATS), seed=seed)


def ctbn_scaling(lengths=(2, 3, 5, 8), dims=(2, 5, 10, 20), lv_caps=(25, 50, 100),
                 repeats=MIN_REPEATS, seed=0, n_sweeps=10):
    """Seconds per sweep for chain CTBNs of growing length and node size, and
    for Lotka-Volterra at growing caps (exact endpoint data on ``[0, 20]``)."""
    rows = []
    rng = np.random.default_rng(seed)
    cfg = CtbnGibbsConfig(omega_multiplier=2.0)

    def time_model(model, interval, obs, label, size):
        state = {"joint": ctbn_initial_trajectory(model, obs, interval, rng)}

        def step():
            state["joint"] = ctbn_gibbs_sweep(state["joint"], model, obs, cfg, rng)

        sec = _median_time(step, repeats, n_sweeps)
        rows.append({"case": label, "size": size, "seconds": sec})

    def endpoint_obs(model, t_end):
        return {k: DiscreteObservations.exact([0.0, t_end], [0, c - 1], c)
                for k, c in enumerate(model.cards)}

    for m in lengths:
        model = chain_model(m, 5)
        time_model(model, (0.0, 20.0), endpoint_obs(model, 20.0), "chain_length", m)
    for c in dims:
        model = chain_model(5, c)
        time_model(model, (0.0, 20.0), endpoint_obs(model, 20.0), "node_states", c)
    for cap in lv_caps:
        model = lotka_volterra_model(0.5, 0.1, 0.5, 0.1, cap)
        obs = {k: DiscreteObservations.exact([0.0], [5], cap + 1) for k in range(2)}
        time_model(model, (0.0, 2.0), obs, "lv_cap", cap)
    return rows
