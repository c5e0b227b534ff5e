"""Experiment drivers shared by the command line and the acceptance suite.

Every driver takes an explicit seed and returns plain dicts / arrays so the
results can be written as JSON or CSV.  Timing is measured with
``time.perf_counter`` and reported separately from the sampled values.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from .bayes import (InitialDistMode, RatePrior, empty_stats, mh_rate_update, off_diagonal,
                    sample_rate_posterior)
from .core import (TimeInterval, Trajectory, gillespie_sample, sufficient_stats,
                   uniform_distribution)
from .ctbn import (CtbnGibbsConfig, amalgamate, chain_model,
                   ctbn_gibbs_sweep, ctbn_initial_trajectory, ctbn_simulate,
                   flat_to_node_stats, lotka_volterra_model, lv_noise_log_probs,
                   sample_lv_noise, stats_vector)
from .diagnostics import (average_relative_error, effective_sample_size,
                          expected_path_statistics, matrix_exponential)
from .gibbs import DiscreteObservations, gibbs_kernel, initial_trajectory
from .mmpp import MmppModel, PoissonObservations, count_log_likelihood, mmpp_simulate
from .uniformization import dominating_rate


# --------------------------------------------------------------------------
# Poisson-observed MJP (the Omega / burn-in setup)

@dataclass(frozen=True)
class PoissonMjpProblem:
    A: np.ndarray
    pi0: np.ndarray
    rates: np.ndarray
    truth: Trajectory
    events: np.ndarray
    interval: TimeInterval
    seed: int = 0
    config: dict = field(default_factory=dict)

    @property
    def n_states(self):
        return self.A.shape[0]

    @property
    def obs(self):
        return PoissonObservations(self.events, self.rates)


def poisson_mjp_problem(n_states=5, t_end=100.0, rates=None, seed=0,
                        prior=RatePrior(1.0, 1.0, 1.0)) -> PoissonMjpProblem:
    """Random ``A`` from the rate prior, a path from uniform ``pi0`` and Poisson
    events with emission rates ``rates`` (default ``1, 2, ..., N``)."""
    rng = np.random.default_rng(seed)
    rates = np.arange(1.0, n_states + 1) if rates is None else np.asarray(rates, float)
    A = sample_rate_posterior(empty_stats(n_states), prior, rng)
    pi0 = uniform_distribution(n_states)
    truth, events = mmpp_simulate(MmppModel(A, pi0, rates), (0.0, t_end), rng)
    cfg = {"n_states": n_states, "t_end": t_end, "emission_rates": rates.tolist(),
           "prior": [prior.alpha1, prior.alpha2, float(np.asarray(prior.beta).mean())],
           "seed": seed}
    return PoissonMjpProblem(A, pi0, rates, truth, events, TimeInterval(0.0, t_end), seed, cfg)


def path_summary(traj: Trajectory, n_states) -> np.ndarray:
    """Dwell time in each state and the total number of transitions."""
    st = sufficient_stats(traj, n_states)
    return np.concatenate((st.dwell_time, [st.n_transitions]))


def fixed_rate_run(problem: PoissonMjpProblem, k, n_burnin, n_samples, seed, init=None):
    """Gibbs chain at the true ``A``.  Returns ``(summaries, seconds_per_sweep)``
    where the timing covers the post-burn-in sweeps only."""
    rng = np.random.default_rng(seed)
    obs = problem.obs
    traj = init if init is not None else \
        initial_trajectory(problem.A, problem.pi0, obs, problem.interval, rng)
    omega = dominating_rate(problem.A, k)
    for _ in range(n_burnin):
        traj = gibbs_kernel(traj, problem.A, problem.pi0, obs, omega, rng)
    out = np.empty((n_samples, problem.n_states + 1))
    t0 = time.perf_counter()
    for i in range(n_samples):
        traj = gibbs_kernel(traj, problem.A, problem.pi0, obs, omega, rng)
        out[i] = path_summary(traj, problem.n_states)
    return out, (time.perf_counter() - t0) / max(n_samples, 1)


def joint_rate_run(problem: PoissonMjpProblem, k, n_burnin, n_samples, seed,
                   prior=RatePrior(1.0, 1.0, 1.0)):
    """Path and ``A`` sampled jointly (fixed uniform ``pi0``, known emission
    rates).  Returns ``(off-diagonal A per sweep, seconds_per_sweep)``."""
    rng = np.random.default_rng(seed)
    obs = problem.obs
    mode = InitialDistMode.fixed(problem.pi0)
    A = sample_rate_posterior(empty_stats(problem.n_states), prior, rng)
    traj = initial_trajectory(A, problem.pi0, obs, problem.interval, rng)

    def sweep(A, traj):
        traj = gibbs_kernel(traj, A, problem.pi0, obs, dominating_rate(A, k), rng)
        return mh_rate_update(A, traj, prior, mode, rng)[0], traj

    for _ in range(n_burnin):
        A, traj = sweep(A, traj)
    n_off = problem.n_states * (problem.n_states - 1)
    out = np.empty((n_samples, n_off))
    t0 = time.perf_counter()
    for i in range(n_samples):
        A, traj = sweep(A, traj)
        out[i] = off_diagonal(A)
    return out, (time.perf_counter() - t0) / max(n_samples, 1)


def _median_ess(samples):
    return float(np.median([effective_sample_size(samples[:, j])
                            for j in range(samples.shape[1])]))


def ess_study(problem: PoissonMjpProblem, ks=(1.5, 2.0, 3.0, 5.0, 10.0), n_runs=3,
              n_burnin=200, n_samples=2000, seed=0, joint=True, progress=None):
    """Median ESS and per-sweep cost for each multiplier ``k``.

    Returns a list of row dicts with keys ``mode, k, run, median_ess,
    ess_per_sweep, seconds_per_sweep, ess_per_second``.
    """
    rows = []
    ss = np.random.SeedSequence(seed)
    modes = ("fixed", "joint") if joint else ("fixed",)
    for mode in modes:
        for k in ks:
            for run, child in enumerate(ss.spawn(n_runs)):
                run_seed = int(child.generate_state(1)[0])
                if mode == "fixed":
                    samples, per_sweep = fixed_rate_run(problem, k, n_burnin, n_samples,
                                                        run_seed)
                else:
                    samples, per_sweep = joint_rate_run(problem, k, n_burnin, n_samples,
                                                        run_seed)
                ess = _median_ess(samples)
                rows.append({"mode": mode, "k": float(k), "run": run, "median_ess": ess,
                             "ess_per_sweep": ess / n_samples,
                             "seconds_per_sweep": per_sweep,
                             "ess_per_second": ess / (per_sweep * n_samples)})
                if progress is not None:
                    progress(rows[-1])
    return rows


def summarize_ess_study(rows):
    """Per ``(mode, k)`` averages over runs."""
    out = {}
    for r in rows:
        out.setdefault((r["mode"], r["k"]), []).append(r)
    summary = []
    for (mode, k), rs in sorted(out.items()):
        summary.append({"mode": mode, "k": k,
                        **{key: float(np.mean([r[key] for r in rs]))
                           for key in ("median_ess", "ess_per_sweep", "seconds_per_sweep",
                                       "ess_per_second")}})
    return summary


def dispersed_initializations(problem: PoissonMjpProblem, seed,
                              scales=(0.02, 0.1, 5.0, 20.0, 50.0)):
    """Constant paths in every state plus prior draws under scaled generators."""
    rng = np.random.default_rng(seed)
    inits = [Trajectory.constant(s, problem.interval) for s in range(problem.n_states)]
    for c in scales:
        inits.append(gillespie_sample(problem.A * c, problem.pi0, problem.interval, rng))
    return inits


def burnin_study(problem: PoissonMjpProblem, k=2.0, n_trace=20, n_reference=2000,
                 reference_burnin=200, seed=0, within=5):
    """Transition-count traces from dispersed starts against the long-run
    interquartile band of a reference chain."""
    ref, _ = fixed_rate_run(problem, k, reference_burnin, n_reference, seed)
    q1, q3 = np.percentile(ref[:, -1], [25, 75])
    inits = dispersed_initializations(problem, seed + 1)
    traces, first = [], []
    for j, init in enumerate(inits):
        trace, _ = fixed_rate_run(problem, k, 0, n_trace, seed + 100 + j, init=init)
        counts = trace[:, -1]
        inside = np.flatnonzero((counts >= q1) & (counts <= q3))
        traces.append(counts.tolist())
        first.append(int(inside[0]) + 1 if inside.size else None)
    entered = sum(1 for f in first if f is not None and f <= within)
    return {"band": [float(q1), float(q3)], "initial_counts": [i.n_jumps for i in inits],
            "traces": traces, "first_entry": first, "entered_within": entered,
            "n_runs": len(inits), "within": within}


# --------------------------------------------------------------------------
# MMPP

def mmpp_discretized_dwell(A, pi0, rates, events, interval, dt=1e-3):
    """Posterior mean dwell times from a fixed-grid HMM approximation.

    The state is held constant on cells of width ``dt`` and moves between cells
    with ``expm(A dt)``; each cell sees the count likelihood of its events.
    """
    interval = TimeInterval.coerce(interval)
    n_cells = int(round(interval.length / dt))
    edges = np.linspace(interval.start, interval.end, n_cells + 1)
    obs = PoissonObservations(events, rates)
    ll = count_log_likelihood(obs.window_counts(edges), np.diff(edges), obs.rates)
    P = matrix_exponential(A, interval.length / n_cells)
    lik = np.exp(ll - ll.max(axis=1, keepdims=True))
    n = P.shape[0]
    fwd = np.empty((n_cells, n))
    v = np.asarray(pi0, dtype=float) * lik[0]
    fwd[0] = v / v.sum()
    for i in range(1, n_cells):
        v = (P @ fwd[i - 1]) * lik[i]
        fwd[i] = v / v.sum()
    post = np.empty_like(fwd)
    b = np.ones(n)
    post[-1] = fwd[-1]
    for i in range(n_cells - 2, -1, -1):
        b = P.T @ (b * lik[i + 1])
        b /= b.sum()
        g = fwd[i] * b
        post[i] = g / g.sum()
    return post.sum(axis=0) * (interval.length / n_cells)


def mmpp_dwell_run(A, pi0, rates, events, interval, k, n_burnin, n_samples, seed):
    """Dwell-time samples from the uniformization sampler at fixed parameters."""
    rng = np.random.default_rng(seed)
    obs = PoissonObservations(events, rates)
    interval = TimeInterval.coerce(interval)
    traj = initial_trajectory(A, pi0, obs, interval, rng)
    omega = dominating_rate(A, k)
    n = np.asarray(A).shape[0]
    out = np.empty((n_samples, n))
    for i in range(n_burnin + n_samples):
        traj = gibbs_kernel(traj, A, pi0, obs, omega, rng)
        if i >= n_burnin:
            out[i - n_burnin] = sufficient_stats(traj, n).dwell_time
    return out


def events_with_count(traj: Trajectory, rates, n_events, rng) -> np.ndarray:
    """``n_events`` points with density proportional to ``rates[S(t)]``,
    i.e. the MMPP output conditioned on its total count."""
    breaks = traj.breakpoints
    mass = np.diff(breaks) * np.asarray(rates, dtype=float)[traj.all_states]
    seg = rng.choice(mass.size, size=n_events, p=mass / mass.sum())
    t = breaks[seg] + rng.random(n_events) * np.diff(breaks)[seg]
    return np.sort(t)


def mmpp_sweep_timing(A, pi0, rates, interval, counts=(10, 100, 1000), k=2.0, n_warmup=20,
                      n_sweeps=300, n_repeats=5, seed=0):
    """Median per-sweep wall time at fixed ``A`` for data sets of each size.

    Emission rates are scaled so each data set is typical for its size; the
    latent path is shared.
    """
    rng = np.random.default_rng(seed)
    interval = TimeInterval.coerce(interval)
    truth = gillespie_sample(A, pi0, interval, rng)
    base = np.asarray(rates, dtype=float)
    expected = float(np.sum(np.diff(truth.breakpoints) * base[truth.all_states]))
    omega = dominating_rate(A, k)
    rows = []
    for n_ev in counts:
        scaled = base * (n_ev / expected)
        obs = PoissonObservations(events_with_count(truth, scaled, n_ev, rng), scaled)
        traj = truth
        for _ in range(n_warmup):
            traj = gibbs_kernel(traj, A, pi0, obs, omega, rng)
        reps = []
        for _ in range(n_repeats):
            t0 = time.perf_counter()
            for _ in range(n_sweeps):
                traj = gibbs_kernel(traj, A, pi0, obs, omega, rng)
            reps.append((time.perf_counter() - t0) / n_sweeps)
        rows.append({"n_events": int(n_ev), "seconds_per_sweep": float(np.median(reps))})
    return rows


# --------------------------------------------------------------------------
# Chain CTBN

CHAIN_START = (0, 1, 2, 3, 4)
CHAIN_END = (4, 3, 2, 1, 0)


def chain_problem(n_nodes=5, n_states=5, t_end=20.0, start=CHAIN_START, end=CHAIN_END):
    model = chain_model(n_nodes, n_states)
    start = np.asarray(start[:n_nodes]) % n_states
    end = np.asarray(end[:n_nodes]) % n_states
    obs = {k: DiscreteObservations.exact([0.0, t_end], [start[k], end[k]], n_states)
           for k in range(n_nodes)}
    return SimpleNamespace(model=model, obs=obs, start=start, end=end,
                           interval=TimeInterval(0.0, t_end))


def chain_reference_statistics(problem, n_grid=4001) -> np.ndarray:
    """Exact posterior means of the per-node statistics by quadrature on the
    amalgamated (sparse) generator."""
    model = problem.model
    A, _ = amalgamate(model, sparse=True)
    J = model.joint_size
    f0 = np.zeros(J)
    f0[np.ravel_multi_index(tuple(problem.start), model.cards)] = 1.0
    b0 = np.zeros(J)
    b0[np.ravel_multi_index(tuple(problem.end), model.cards)] = 1.0
    dwell, counts = expected_path_statistics(A, f0, b0, problem.interval.length, n_grid)
    return flat_to_node_stats(SimpleNamespace(dwell_time=dwell, transition_counts=counts),
                              model.cards)


def chain_error_run(problem, reference, n_samples, n_burnin=200, k=2.0, seed=0,
                    checkpoints=(100, 1000, 10_000)):
    """Average relative error of the running posterior mean at each checkpoint."""
    rng = np.random.default_rng(seed)
    cfg = CtbnGibbsConfig(omega_multiplier=k)
    joint = ctbn_initial_trajectory(problem.model, problem.obs, problem.interval, rng)
    for _ in range(n_burnin):
        joint = ctbn_gibbs_sweep(joint, problem.model, problem.obs, cfg, rng)
    total = np.zeros_like(reference)
    errors = {}
    t0 = time.perf_counter()
    for i in range(1, n_samples + 1):
        joint = ctbn_gibbs_sweep(joint, problem.model, problem.obs, cfg, rng)
        total += stats_vector(joint, problem.model.cards)
        if i in checkpoints:
            errors[i] = average_relative_error(total / i, reference).total
    return errors, (time.perf_counter() - t0) / max(n_samples, 1)


# --------------------------------------------------------------------------
# Lotka-Volterra smoothing

# The published rates (5e-4, 1e-4, 5e-4, 1e-4) sped up 1000x: the same dynamics
# on a clock compressed from [0, 2250] to [0, 2.25], with equilibrium (5, 5).
LV_CONFIG = {"cap": 30, "alpha": 0.5, "beta": 0.1, "gamma": 0.5, "delta": 0.1,
             "time_scale": 1000.0, "t_end": 2.25, "obs_spacing": 0.1, "n_obs": 15,
             "initial_state": [8, 4], "k": 2.0, "n_burnin": 100, "n_samples": 1000,
             "n_query": 226}


def lv_problem(seed=0, config=None):
    cfg = dict(LV_CONFIG, **(config or {}))
    cap = cfg["cap"]
    model = lotka_volterra_model(cfg["alpha"], cfg["beta"], cfg["gamma"], cfg["delta"], cap)
    rng = np.random.default_rng(seed)
    interval = TimeInterval(0.0, cfg["t_end"])
    truth = ctbn_simulate(model, interval, rng, s0=cfg["initial_state"])
    times = cfg["obs_spacing"] * np.arange(1, cfg["n_obs"] + 1)
    noisy = truth.state_at(times)
    values = np.stack([sample_lv_noise(noisy[:, k], cap, rng) for k in range(2)], axis=1)
    noise = lv_noise_log_probs(cap)
    obs = {}
    for k in range(2):
        exact = np.full((1, cap + 1), -np.inf)
        exact[0, truth.s0[k]] = 0.0
        rows = np.vstack((exact, noise[values[:, k]]))
        obs[k] = DiscreteObservations(np.concatenate(([0.0], times)), rows)
    return SimpleNamespace(model=model, truth=truth, obs_times=times, obs_values=values,
                           obs=obs, interval=interval, config=cfg)


def lv_posterior(problem, seed):
    """Posterior mean and 5%/95% bands of both populations on a time grid."""
    cfg = problem.config
    rng = np.random.default_rng(seed)
    gcfg = CtbnGibbsConfig(omega_multiplier=cfg["k"])
    joint = ctbn_initial_trajectory(problem.model, problem.obs, problem.interval, rng)
    query = np.linspace(problem.interval.start, problem.interval.end, cfg["n_query"])
    draws = np.empty((cfg["n_samples"], query.size, 2))
    for i in range(cfg["n_burnin"] + cfg["n_samples"]):
        joint = ctbn_gibbs_sweep(joint, problem.model, problem.obs, gcfg, rng)
        if i >= cfg["n_burnin"]:
            draws[i - cfg["n_burnin"]] = joint.state_at(query)
    return {"times": query, "mean": draws.mean(axis=0),
            "lower": np.percentile(draws, 5, axis=0),
            "upper": np.percentile(draws, 95, axis=0)}


def lv_checks(first, second, last_obs_time):
    """Self-consistency of two runs and growth of the credible width.

    Populations are integers, so a band ``{l, ..., u}`` is read as the real
    interval ``[l - 0.5, u + 0.5]``; the strict ``[l, u]`` fraction is reported
    alongside.
    """
    t = first["times"]

    def within(mean, band, pad):
        return (mean >= band["lower"] - pad) & (mean <= band["upper"] + pad)

    inside = within(second["mean"], first, 0.5) & within(first["mean"], second, 0.5)
    strict = within(second["mean"], first, 0.0) & within(first["mean"], second, 0.0)
    width = 0.5 * ((first["upper"] - first["lower"]) + (second["upper"] - second["lower"]))
    before = width[(t > 0) & (t <= last_obs_time)].mean(axis=0)
    after = width[t > last_obs_time].mean(axis=0)
    return {"mean_inside_other_band": bool(inside.all()),
            "fraction_inside": float(inside.mean()),
            "strict_fraction_inside": float(strict.mean()),
            "width_before": before.tolist(), "width_after": after.tolist(),
            "width_grows": bool(np.all(after > before))}
