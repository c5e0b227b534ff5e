"""Command-line runner.

Every run writes ``run-manifest.json`` (seed, resolved arguments, version,
kernel backend, output files) next to its outputs; ``mjpgibbs --replay
MANIFEST`` re-runs it.  Files listed under ``outputs`` are bit-identical across replays;
wall-clock measurements go to the files listed under ``timing_outputs``.

Exit codes: 0 success, 1 usage error (including refusing to overwrite
outputs without ``--force``), 2 model or data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .bayes import InitialDistMode, RatePrior, full_bayes_chain, write_posterior_csv
from .core import TimeInterval, gillespie_sample, sufficient_stats, write_trajectory_csv
from .ctbn import (CtbnGibbsConfig, CtbnModel, amalgamate, ctbn_gibbs_sweep,
                   ctbn_initial_trajectory, ctbn_simulate, flat_to_node_stats,
                   stats_names, stats_vector)
from .diagnostics import (average_relative_error, ess_report, exact_smoothed_marginals,
                          expected_path_statistics)
from .errors import MJPError, ModelError, NumericalError
from .experiments import burnin_study, ess_study, poisson_mjp_problem, summarize_ess_study
from .gibbs import DiscreteObservations, GibbsConfig, gibbs_kernel, initial_trajectory
from .mmpp import (EmissionPrior, MmppModel, PoissonObservations, mmpp_bayes_chain,
                   mmpp_simulate, read_events_csv, write_events_csv)
from .models import MjpModel, load_model
from .uniformization import dominating_rate

MANIFEST = "run-manifest.json"
TIMING = "timing.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# input files

def read_discrete_obs_csv(path, n_states, error=0.0) -> DiscreteObservations:
    """``time,value`` rows (state observed with symmetric error ``error``) or
    ``time,ll_0,...,ll_{N-1}`` rows of log-likelihoods (``-inf`` allowed)."""
    rows = _read_csv(path)
    header = [c.strip() for c in rows[0]]
    body = [r for r in rows[1:] if r]
    try:
        times = np.array([float(r[0]) for r in body])
        if header == ["time", "value"]:
            values = np.array([int(r[1]) for r in body])
            if values.size and (values.min() < 0 or values.max() >= n_states):
                raise ModelError("observed value outside the state space")
            return DiscreteObservations.symmetric_noise(times, values, n_states, error)
        if header == ["time"] + [f"ll_{s}" for s in range(n_states)]:
            ll = np.array([[float(x) for x in r[1:]] for r in body]).reshape(-1, n_states)
            return DiscreteObservations(times, ll)
    except (ValueError, IndexError) as exc:
        raise ModelError(f"malformed observation CSV: {exc}") from None
    raise ModelError("observation CSV header must be 'time,value' or 'time,ll_0,...'")


def read_ctbn_obs_csv(path, model: CtbnModel, error=0.0):
    """``time,node,value`` rows; ``node`` is a node name or index."""
    rows = _read_csv(path)
    if [c.strip() for c in rows[0]] != ["time", "node", "value"]:
        raise ModelError("CTBN observation CSV header must be 'time,node,value'")
    per_node = {}
    try:
        for r in rows[1:]:
            if not r:
                continue
            node = r[1].strip()
            k = model.names.index(node) if node in model.names else int(node)
            if not 0 <= k < model.n_nodes:
                raise ModelError(f"unknown node {node!r}")
            per_node.setdefault(k, []).append((float(r[0]), int(r[2])))
    except ValueError as exc:
        raise ModelError(f"malformed observation CSV: {exc}") from None
    obs = {}
    for k, items in per_node.items():
        items.sort()
        t, v = np.array(items).T
        c = model.cards[k]
        if v.min() < 0 or v.max() >= c:
            raise ModelError(f"observed value outside node {model.names[k]!r}'s states")
        obs[k] = DiscreteObservations.symmetric_noise(t, v.astype(int), c, error)
    return obs


def _read_csv(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ModelError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise ModelError(f"{path} is empty")
    return rows


def _read_events(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return read_events_csv(fh)
    except OSError as exc:
        raise ModelError(f"cannot read {path}: {exc}") from None


# --------------------------------------------------------------------------
# outputs

class Outputs:
    """Collects files for one run; refuses to clobber without ``force``."""

    def __init__(self, directory, force):
        self.dir = Path(directory)
        self.force = force
        self.files = {}
        self.timing = set()

    def add(self, name, text, timing=False):
        self.files[name] = text
        if timing:
            self.timing.add(name)

    def add_rows(self, name, header, rows, timing=False):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) for x in r])
        self.add(name, buf.getvalue(), timing)

    def check(self, names):
        existing = [n for n in names if (self.dir / n).exists()]
        if existing and not self.force:
            raise UsageError(f"{self.dir / existing[0]} exists; pass --force to overwrite")

    def write(self):
        self.check(list(self.files) + [MANIFEST])
        self.dir.mkdir(parents=True, exist_ok=True)
        for name, text in self.files.items():
            with open(self.dir / name, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    if isinstance(x, (np.integer,)):
        return int(x)
    return x


def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    raise TypeError(f"not serializable: {type(x)}")


def _suffix(name, i, n):
    if n == 1:
        return name
    stem, ext = os.path.splitext(name)
    return f"{stem}-r{i}{ext}"


# --------------------------------------------------------------------------
# replicate execution

def _map(fn, jobs, threads):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


def _interval(args):
    if args.interval is None:
        raise UsageError("--interval T0 T1 is required")
    try:
        return TimeInterval(*args.interval)
    except ModelError as exc:
        raise UsageError(str(exc)) from None


def _model(args, kinds):
    if args.model is None:
        raise UsageError("--model is required")
    model = load_model(args.model)
    kind = {MjpModel: "mjp", MmppModel: "mmpp", CtbnModel: "ctbn"}[type(model)]
    if kind not in kinds:
        raise ModelError(f"{args.command} needs a model of type {' or '.join(kinds)}, "
                         f"got {kind}")
    return model


# ---- simulate

def _simulate_job(job):
    model, interval, seed = job
    rng = np.random.default_rng(seed)
    if isinstance(model, MjpModel):
        return {"trajectory.csv": write_trajectory_csv(
            gillespie_sample(model.A, model.pi0, interval, rng))}
    if isinstance(model, MmppModel):
        traj, events = mmpp_simulate(model, interval, rng)
        return {"trajectory.csv": write_trajectory_csv(traj), "events.csv": write_events_csv(events)}
    joint = ctbn_simulate(model, interval, rng)
    rows = [(interval.start, model.names[k], int(s)) for k, s in enumerate(joint.s0)]
    rows += [(t, model.names[k], int(s)) for t, k, s in zip(joint.times, joint.nodes, joint.states)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["time", "node", "state"])
    for r in rows:
        w.writerow([_fmt(r[0]), r[1], r[2]])
    return {"trajectory.csv": buf.getvalue()}


def cmd_simulate(args, out):
    interval = _interval(args)
    model = _model(args, ("mjp", "mmpp", "ctbn"))
    seeds = _seeds(args)
    results = _map(_simulate_job, [(model, interval, s) for s in seeds], args.threads)
    for i, files in enumerate(results):
        for name, text in files.items():
            out.add(_suffix(name, i, len(seeds)), text)


# ---- infer-mjp

def _stat_header(n):
    return [f"dwell_{s}" for s in range(n)] + \
        [f"n_{i}_{j}" for i in range(n) for j in range(n) if i != j]


def _infer_mjp_job(job):
    A, pi0, obs, interval, cfg, bayes, prior, init_method, seed = job
    rng = np.random.default_rng(seed)
    n = A.shape[0]
    if bayes == "off":
        traj = initial_trajectory(A, pi0, obs, interval, rng, method=init_method,
                                  k=cfg.omega_multiplier)
        omega = dominating_rate(A, cfg.omega_multiplier)
        rows = []
        for i in range(cfg.n_burnin + cfg.n_samples):
            traj = gibbs_kernel(traj, A, pi0, obs, omega, rng)
            if i >= cfg.n_burnin:
                rows.append(sufficient_stats(traj, n).flat())
        return {"kind": "stats", "rows": np.array(rows).reshape(-1, n * n)}
    mode = InitialDistMode.fixed(pi0) if bayes == "fixed" else InitialDistMode.stationary()
    init = initial_trajectory(A, mode.pi0_for(A), obs, interval, rng, method=init_method,
                              k=cfg.omega_multiplier)
    samples = list(full_bayes_chain(obs, prior, mode, cfg, n, interval, A_init=A, init=init,
                                    rng=rng))
    return {"kind": "posterior", "text": write_posterior_csv(samples, n),
            "rows": np.array([np.concatenate((s.stats.flat(), [float(s.accepted)]))
                              for s in samples]).reshape(-1, n * n + 1)}


def _gibbs_config(args):
    if args.samples < 20:
        raise UsageError("--samples must be at least 20")
    return GibbsConfig(omega_multiplier=args.k, n_burnin=args.burnin, n_samples=args.samples)


def _summaries(out, header, mats, wall):
    summary = {}
    for i, m in enumerate(mats):
        rep = ess_report(m[:, :len(header)], wall[i])
        summary[f"replicate_{i}"] = {
            "posterior_mean": dict(zip(header, m[:, :len(header)].mean(axis=0).tolist())),
            "median_ess": rep.median_ess,
            "ess": dict(zip(header, rep.per_statistic))}
    out.add("summary.json", _json(summary))


def cmd_infer_mjp(args, out):
    interval = _interval(args)
    model = _model(args, ("mjp",))
    if args.obs is None:
        raise UsageError("--obs is required")
    obs = read_discrete_obs_csv(args.obs, model.n_states, args.obs_error)
    cfg = _gibbs_config(args)
    prior = RatePrior(args.alpha1, args.alpha2, args.beta)
    seeds = _seeds(args)
    jobs = [(model.A, model.pi0, obs, interval, cfg, args.bayes, prior, args.init, s)
            for s in seeds]
    t0 = time.perf_counter()
    results = _map(_infer_mjp_job, jobs, args.threads)
    wall = time.perf_counter() - t0
    header = _stat_header(model.n_states)
    for i, res in enumerate(results):
        if res["kind"] == "stats":
            out.add_rows(_suffix("samples.csv", i, len(seeds)), ["sweep"] + header,
                         [[j] + list(r) for j, r in enumerate(res["rows"])])
        else:
            out.add(_suffix("posterior.csv", i, len(seeds)), res["text"])
    _summaries(out, header, [r["rows"] for r in results], [wall / len(seeds)] * len(seeds))
    return {"wall_seconds": wall}


# ---- infer-mmpp

def _infer_mmpp_job(job):
    model, events, interval, cfg, bayes, prior, seed = job
    rng = np.random.default_rng(seed)
    n = model.n_states
    if bayes == "off":
        obs = PoissonObservations(events, model.rates)
        traj = initial_trajectory(model.A, model.pi0, obs, interval, rng)
        omega = dominating_rate(model.A, cfg.omega_multiplier)
        rows = []
        for i in range(cfg.n_burnin + cfg.n_samples):
            traj = gibbs_kernel(traj, model.A, model.pi0, obs, omega, rng)
            if i >= cfg.n_burnin:
                rows.append(sufficient_stats(traj, n).flat())
        return np.array(rows).reshape(-1, n * n)
    mode = InitialDistMode.fixed(model.pi0) if bayes == "fixed" else InitialDistMode.stationary()
    rows = []
    for smp in mmpp_bayes_chain(events, n, interval, cfg, prior, EmissionPrior.default(n),
                                mode=mode, A_init=model.A, rates_init=model.rates, rng=rng):
        off = smp.A[~np.eye(n, dtype=bool)]
        rows.append(np.concatenate((smp.stats.flat(), off, smp.rates)))
    return np.array(rows).reshape(-1, n * n + n * (n - 1) + n)


def cmd_infer_mmpp(args, out):
    interval = _interval(args)
    model = _model(args, ("mmpp",))
    if args.obs is None:
        raise UsageError("--obs is required")
    events = _read_events(args.obs)
    if events.size and (events[0] < interval.start or events[-1] > interval.end):
        raise ModelError("event times fall outside the interval")
    cfg = _gibbs_config(args)
    prior = RatePrior(args.alpha1, args.alpha2, args.beta)
    seeds = _seeds(args)
    t0 = time.perf_counter()
    mats = _map(_infer_mmpp_job, [(model, events, interval, cfg, args.bayes, prior, s)
                                  for s in seeds], args.threads)
    wall = time.perf_counter() - t0
    n = model.n_states
    header = _stat_header(n)
    if args.bayes != "off":
        header = header + [f"a_{i}_{j}" for i in range(n) for j in range(n) if i != j] + \
            [f"rate_{s}" for s in range(n)]
    for i, m in enumerate(mats):
        out.add_rows(_suffix("samples.csv", i, len(seeds)), ["sweep"] + header,
                     [[j] + list(r) for j, r in enumerate(m)])
    _summaries(out, header, mats, [wall / len(seeds)] * len(seeds))
    return {"wall_seconds": wall}


# ---- infer-ctbn

def _infer_ctbn_job(job):
    model, obs, interval, cfg, checkpoints, reference, seed = job
    rng = np.random.default_rng(seed)
    joint = ctbn_initial_trajectory(model, obs, interval, rng)
    rows, errors = [], []
    total = None
    for i in range(cfg.n_burnin + cfg.n_samples):
        joint = ctbn_gibbs_sweep(joint, model, obs, cfg, rng)
        if i >= cfg.n_burnin:
            v = stats_vector(joint, model.cards)
            rows.append(v)
            total = v.copy() if total is None else total + v
            m = len(rows)
            if reference is not None and m in checkpoints:
                errors.append((m, average_relative_error(total / m, reference).total))
    return np.array(rows), errors


def _ctbn_reference(model, obs, interval, error):
    """Exact posterior statistics when data are exact joint states at the endpoints."""
    if error != 0 or set(obs) != set(range(model.n_nodes)):
        raise UsageError("--error-checkpoints needs exact observations of every node")
    start, end = [], []
    for k in range(model.n_nodes):
        o = obs[k]
        if not np.array_equal(o.times, [interval.start, interval.end]):
            raise UsageError("--error-checkpoints needs observations only at T0 and T1")
        start.append(int(np.argmax(o.log_likelihoods[0])))
        end.append(int(np.argmax(o.log_likelihoods[1])))
    A, _ = amalgamate(model, sparse=True)
    f0 = np.zeros(model.joint_size)
    f0[np.ravel_multi_index(tuple(start), model.cards)] = 1.0
    b0 = np.zeros(model.joint_size)
    b0[np.ravel_multi_index(tuple(end), model.cards)] = 1.0
    dwell, counts = expected_path_statistics(A, f0, b0, interval.length)

    class _S:
        pass

    s = _S()
    s.dwell_time, s.transition_counts = dwell, counts
    return flat_to_node_stats(s, model.cards)


def cmd_infer_ctbn(args, out):
    interval = _interval(args)
    model = _model(args, ("ctbn",))
    if args.obs is None:
        raise UsageError("--obs is required")
    obs = read_ctbn_obs_csv(args.obs, model, args.obs_error)
    if args.samples < 20:
        raise UsageError("--samples must be at least 20")
    cfg = CtbnGibbsConfig(omega_multiplier=args.k, n_burnin=args.burnin,
                          n_samples=args.samples, random_scan=args.random_scan)
    checkpoints, reference = (), None
    if args.error_checkpoints:
        checkpoints = tuple(int(x) for x in args.error_checkpoints.split(","))
        reference = _ctbn_reference(model, obs, interval, args.obs_error)
        out.add_rows("reference.csv", ["statistic", "value"],
                     list(zip(stats_names(model), reference)))
    seeds = _seeds(args)
    t0 = time.perf_counter()
    results = _map(_infer_ctbn_job, [(model, obs, interval, cfg, checkpoints, reference, s)
                                     for s in seeds], args.threads)
    wall = time.perf_counter() - t0
    header = stats_names(model)
    for i, (m, errors) in enumerate(results):
        out.add_rows(_suffix("samples.csv", i, len(seeds)), ["sweep"] + header,
                     [[j] + list(r) for j, r in enumerate(m)])
    if reference is not None:
        out.add_rows("error_trace.csv", ["replicate", "n_samples", "avg_relative_error"],
                     [[i, n, e] for i, (_, errors) in enumerate(results) for n, e in errors])
    _summaries(out, header, [m for m, _ in results], [wall / len(seeds)] * len(seeds))
    return {"wall_seconds": wall}


# ---- oracle

def cmd_oracle(args, out):
    interval = _interval(args)
    model = _model(args, ("mjp",))
    obs = read_discrete_obs_csv(args.obs, model.n_states, args.obs_error) if args.obs else None
    query = np.linspace(interval.start, interval.end, args.n_query)
    marg = exact_smoothed_marginals(model.A, model.pi0, obs, query, t_start=interval.start)
    out.add_rows("marginals.csv", ["time"] + [f"p_{s}" for s in range(model.n_states)],
                 [[t] + list(row) for t, row in zip(query, marg)])


# ---- ess-study

def cmd_ess_study(args, out):
    try:
        ks = [float(x) for x in args.k_list.split(",")]
    except ValueError:
        raise UsageError("--k takes a comma-separated list of multipliers") from None
    if any(k <= 1 for k in ks):
        raise UsageError("every multiplier must exceed 1")
    t_end = args.interval[1] - args.interval[0] if args.interval else 100.0
    problem = poisson_mjp_problem(args.n_states, t_end, seed=args.problem_seed)
    rows = ess_study(problem, ks, n_runs=args.runs, n_burnin=args.burnin,
                     n_samples=args.samples, seed=args.seed, joint=not args.fixed_only)
    cols = ["mode", "k", "run", "median_ess", "ess_per_sweep"]
    out.add_rows("ess_study.csv", cols, [[r[c] for c in cols] for r in rows])
    cols = ["mode", "k", "run", "seconds_per_sweep", "ess_per_second"]
    out.add_rows("ess_timing.csv", cols, [[r[c] for c in cols] for r in rows], timing=True)
    cols = ["mode", "k", "median_ess", "ess_per_sweep", "seconds_per_sweep", "ess_per_second"]
    out.add_rows("ess_summary.csv", cols, [[r[c] for c in cols] for r in summarize_ess_study(rows)],
                 timing=True)
    burn = burnin_study(problem, k=2.0, seed=args.seed)
    out.add_rows("burnin_traces.csv", ["init", "sweep", "n_transitions"],
                 [[i, j + 1, c] for i, tr in enumerate(burn["traces"]) for j, c in enumerate(tr)])
    out.add("problem.json", _json({"generator": problem.A, "emission_rates": problem.rates,
                                   "config": problem.config, "burnin_band": burn["band"]}))


# ---- bench

def cmd_bench(args, out):
    from . import bench

    if args.repeats < bench.MIN_REPEATS:
        raise UsageError(f"--repeats must be at least {bench.MIN_REPEATS}")
    suites = args.suite.split(",")
    if "kernels" in suites:
        rows = bench.add_speedups(bench.kernel_benchmark(repeats=args.repeats, seed=args.seed)
                                  + bench.sweep_benchmark(repeats=args.repeats, seed=args.seed))
        cols = ["case", "n_states", "n_steps", "backend", "seconds", "speedup"]
        out.add_rows("bench_kernels.csv", cols, [[r[c] for c in cols] for r in rows], timing=True)
    if "mmpp" in suites:
        rows = bench.mmpp_scaling(repeats=args.repeats, seed=args.seed)
        out.add_rows("mmpp_scaling.csv", ["n_events", "seconds_per_sweep"],
                     [[r["n_events"], r["seconds_per_sweep"]] for r in rows], timing=True)
    if "ctbn" in suites:
        rows = bench.ctbn_scaling(repeats=args.repeats, seed=args.seed)
        out.add_rows("ctbn_scaling.csv", ["case", "size", "seconds_per_sweep"],
                     [[r["case"], r["size"], r["seconds"]] for r in rows], timing=True)
    unknown = set(suites) - {"kernels", "mmpp", "ctbn"}
    if unknown:
        raise UsageError(f"unknown bench suite {sorted(unknown)[0]!r}")


COMMANDS = {"simulate": cmd_simulate, "infer-mjp": cmd_infer_mjp, "infer-mmpp": cmd_infer_mmpp,
            "infer-ctbn": cmd_infer_ctbn, "oracle": cmd_oracle, "ess-study": cmd_ess_study,
            "bench": cmd_bench}


# --------------------------------------------------------------------------
# parser

def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--model", metavar="PATH")
    common.add_argument("--obs", metavar="PATH")
    common.add_argument("--interval", nargs=2, type=float, metavar=("T0", "T1"))
    common.add_argument("--burnin", type=int, help="burn-in sweeps (default 100; ess-study 200)")
    common.add_argument("--samples", type=int,
                        help="retained sweeps (default 1000; ess-study 2000)")
    common.add_argument("--seed", type=int, help="base seed; drawn and recorded if omitted")
    common.add_argument("--out", metavar="DIR", default=".")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--threads", type=int, default=1,
                        help="worker processes for independent replicates")
    common.add_argument("--replicates", type=int, default=1,
                        help="independent runs with seeds SEED, SEED+1, ...")

    kopt = _Parser(add_help=False)
    kopt.add_argument("--k", type=float, default=2.0, help="Omega multiplier (default 2)")
    chain = [common, kopt]

    p = _Parser(prog="mjpgibbs", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--replay", metavar="MANIFEST", help="re-run the command recorded in a manifest")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    sub.add_parser("simulate", parents=chain, help="forward-simulate a model")
    bayes_help = "rate-matrix inference: off, fixed pi0, or pi0 = stationary law"
    for name in ("infer-mjp", "infer-mmpp"):
        sp = sub.add_parser(name, parents=chain, help=f"posterior sampling ({name[6:]})")
        sp.add_argument("--bayes", choices=("off", "fixed", "stationary"), default="off",
                        help=bayes_help)
        sp.add_argument("--alpha1", type=float, default=1.0)
        sp.add_argument("--alpha2", type=float, default=1.0)
        sp.add_argument("--beta", type=float, default=1.0)
        if name == "infer-mjp":
            sp.add_argument("--obs-error", type=float, default=0.0,
                            help="symmetric observation error for time,value data")
            sp.add_argument("--init", choices=("grid", "prior"), default="grid")
    sp = sub.add_parser("infer-ctbn", parents=chain, help="node-wise CTBN posterior sampling")
    sp.add_argument("--obs-error", type=float, default=0.0)
    sp.add_argument("--random-scan", action="store_true")
    sp.add_argument("--error-checkpoints", metavar="N,N,...",
                    help="write average relative error against the exact reference")
    sp = sub.add_parser("oracle", parents=chain, help="exact smoothed marginals (N <= 16)")
    sp.add_argument("--obs-error", type=float, default=0.0)
    sp.add_argument("--n-query", type=int, default=101)
    sp = sub.add_parser("ess-study", parents=[common], help="ESS versus Omega multiplier")
    sp.add_argument("--k", dest="k_list", default="1.5,2,3,5,10",
                    help="comma-separated multipliers")
    sp.add_argument("--runs", type=int, default=3)
    sp.add_argument("--n-states", type=int, default=5)
    sp.add_argument("--problem-seed", type=int, default=1)
    sp.add_argument("--fixed-only", action="store_true")
    sp = sub.add_parser("bench", parents=chain, help="timing suites")
    sp.add_argument("--repeats", type=int, default=5)
    sp.add_argument("--suite", default="kernels", help="comma list of kernels, mmpp, ctbn")
    return p


def _seeds(args):
    if args.replicates < 1:
        raise UsageError("--replicates must be positive")
    return [args.seed + i for i in range(args.replicates)]


def _strip_run_flags(argv):
    """Drop ``--out``/``--force``/``--threads`` so a manifest can be replayed elsewhere."""
    out, skip = [], 0
    for a in argv:
        if skip:
            skip -= 1
            continue
        if a in ("--out", "--threads"):
            skip = 1
            continue
        if a == "--force" or a.startswith(("--out=", "--threads=")):
            continue
        out.append(a)
    return out


DEFAULT_LENGTHS = {"ess-study": (200, 2000)}


def run(argv):
    if argv and argv[0] == "--replay":
        if len(argv) < 2:
            raise UsageError("--replay needs a manifest path")
        try:
            manifest = json.loads(Path(argv[1]).read_text(encoding="utf-8"))
            replay_argv = list(manifest["argv"])
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ModelError(f"cannot read manifest: {exc}") from None
        # run-level flags (--out, --force, --threads) may follow the manifest
        return run(replay_argv + list(argv[2:]))
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("a subcommand is required")
    if args.threads < 1:
        raise UsageError("--threads must be positive")
    if args.seed is None:
        args.seed = int(np.random.SeedSequence().generate_state(1)[0] >> 1)
    if getattr(args, "k", 2.0) <= 1:
        raise UsageError("--k must exceed 1")
    burnin, samples = DEFAULT_LENGTHS.get(args.command, (100, 1000))
    args.burnin = burnin if args.burnin is None else args.burnin
    args.samples = samples if args.samples is None else args.samples
    if args.burnin < 0 or args.samples < 0:
        raise UsageError("--burnin and --samples must be nonnegative")
    out = Outputs(args.out, args.force)
    out.check([MANIFEST])
    canonical = [args.command] + _strip_run_flags(argv[argv.index(args.command) + 1:])
    canonical = [a for i, a in enumerate(canonical)
                 if a != "--seed" and (i == 0 or canonical[i - 1] != "--seed")
                 and not a.startswith("--seed=")]
    canonical += ["--seed", str(args.seed)]
    t0 = time.perf_counter()
    timing = COMMANDS[args.command](args, out) or {}
    timing["total_seconds"] = time.perf_counter() - t0
    config = {k: v for k, v in vars(args).items() if k not in ("out", "force", "threads", "replay")}
    manifest = {"version": __version__, "command": args.command, "seed": args.seed,
                "replicate_seeds": _seeds(args), "argv": canonical, "config": config,
                "backend": "cython" if kernels.active is kernels.compiled_backend else "python",
                "outputs": sorted(set(out.files) - out.timing),
                "timing_outputs": sorted(out.timing | {TIMING})}
    out.add(MANIFEST, _json(manifest))
    out.write()
    with open(Path(args.out) / TIMING, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_json(timing))
    return 0


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        return run(argv)
    except UsageError as exc:
        print(f"mjpgibbs: usage error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"mjpgibbs: numerical error: {exc}", file=sys.stderr)
        return 3
    except (MJPError, OSError) as exc:
        print(f"mjpgibbs: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
