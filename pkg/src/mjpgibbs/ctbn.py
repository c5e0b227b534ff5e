"""Continuous-time Bayesian networks.

A CTBN is a set of finite-state nodes whose rate matrix depends on the
current states of the node's parents.  Parent configurations are indexed in
mixed radix over the parents in their listed order (first parent most
significant, as in ``np.ravel_multi_index``).  Joint states of the whole
network are raveled the same way over all nodes.

Inference resamples one node's path at a time.  Given its Markov blanket the
node is a piecewise-homogeneous MJP (its generator switches whenever a parent
jumps) observed through its own data and through the paths of its children,
whose jump rates and exit rates depend on it.  The uniformization kernel
handles this with a dominating rate that is constant on each parent
configuration segment.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (SufficientStats, TimeInterval, Trajectory, _frozen, as_distribution,
                   as_generator, sufficient_stats)
from .errors import ModelError
from .ffbs import SPARSE_ZERO_FRACTION, HmmProblem, ffbs_sample
from .gibbs import NoObservations, ObservationModel, _relabel, initial_trajectory, window_index
from .uniformization import DEFAULT_K, sample_piecewise_poisson, subordinated_transition_matrix

AMALGAMATION_CAP = 10_000


def _mixed_radix_strides(dims):
    dims = [int(d) for d in dims]
    strides = np.ones(len(dims), dtype=np.int64)
    for i in range(len(dims) - 2, -1, -1):
        strides[i] = strides[i + 1] * dims[i + 1]
    return strides


class CtbnModel:
    """Nodes, parent sets, conditional generators and an initial distribution.

    Parameters
    ----------
    cardinalities : sequence of int
        Number of states of each node.
    parents : sequence of sequences of int
        ``parents[k]`` lists the parents of node ``k``; cycles are allowed,
        self-edges are not.
    rates : sequence
        ``rates[k]`` is either an array ``(n_configs_k, c_k, c_k)`` or a dict
        mapping parent-state tuples to ``(c_k, c_k)`` generators, column
        convention.
    pi0 : optional
        ``None`` (uniform), a list of per-node distributions (product form) or
        an array of shape ``cardinalities`` (joint table).
    names : optional sequence of str
    """

    def __init__(self, cardinalities, parents, rates, pi0=None, names=None):
        self.cards = tuple(int(c) for c in cardinalities)
        m = len(self.cards)
        if m == 0 or any(c < 1 for c in self.cards):
            raise ModelError("every node needs at least one state")
        if len(parents) != m or len(rates) != m:
            raise ModelError("need a parent list and a rate table for every node")
        self.names = [str(n) for n in names] if names is not None else [f"n{k}" for k in range(m)]
        if len(self.names) != m or len(set(self.names)) != m:
            raise ModelError("node names must be unique, one per node")
        self.parents = []
        for k, ps in enumerate(parents):
            ps = tuple(int(p) for p in ps)
            if k in ps:
                raise ModelError(f"node {k} lists itself as a parent")
            if len(set(ps)) != len(ps) or any(not 0 <= p < m for p in ps):
                raise ModelError(f"bad parent list for node {k}")
            self.parents.append(ps)
        self.children = [tuple(c for c in range(m) if k in self.parents[c]) for k in range(m)]
        self._strides = [_mixed_radix_strides([self.cards[p] for p in ps]) for ps in self.parents]
        self.rates = [self._rate_table(k, r) for k, r in enumerate(rates)]
        self.exit = [_frozen(-np.diagonal(r, axis1=1, axis2=2).copy()) for r in self.rates]
        self._set_pi0(pi0)
        self._b_cache = {}

    def subordinated_stack(self, k, multiplier) -> np.ndarray:
        """``I + A^{k|u} / omega_u`` for every configuration ``u``, with
        ``omega_u = multiplier * max_s |A^{k|u}_s|`` (cached)."""
        key = (k, float(multiplier))
        if key not in self._b_cache:
            omega = float(multiplier) * self.exit[k].max(axis=1)
            self._b_cache[key] = _frozen(np.stack(
                [subordinated_transition_matrix(a, w) for a, w in zip(self.rates[k], omega)]))
        return self._b_cache[key]

    def _rate_table(self, k, table):
        c = self.cards[k]
        dims = [self.cards[p] for p in self.parents[k]]
        n_cfg = int(np.prod(dims, dtype=np.int64)) if dims else 1
        if isinstance(table, dict):
            out = np.full((n_cfg, c, c), np.nan)
            for key, mat in table.items():
                key = tuple(np.atleast_1d(key).astype(int)) if len(dims) else ()
                if len(key) != len(dims):
                    raise ModelError(f"node {k}: configuration {key} has wrong length")
                idx = int(np.ravel_multi_index(key, dims)) if dims else 0
                out[idx] = mat
            if np.isnan(out).any():
                raise ModelError(f"node {k}: rate table misses parent configurations")
        else:
            out = np.array(table, dtype=float)
            if out.ndim == 2:
                out = out[None]
        if out.shape != (n_cfg, c, c):
            raise ModelError(f"node {k}: rate table must have shape {(n_cfg, c, c)}")
        out = np.stack([as_generator(a) for a in out])
        return _frozen(out)

    def _set_pi0(self, pi0):
        self.pi0_product = None
        self.pi0_joint_table = None
        if pi0 is None:
            self.pi0_product = [np.full(c, 1.0 / c) for c in self.cards]
        elif isinstance(pi0, (list, tuple)) and len(pi0) == self.n_nodes and all(
                np.ndim(p) == 1 for p in pi0):
            self.pi0_product = [as_distribution(p, c) for p, c in zip(pi0, self.cards)]
        else:
            table = np.array(pi0, dtype=float)
            if table.shape != self.cards:
                raise ModelError(f"joint initial table must have shape {self.cards}")
            as_distribution(table.reshape(-1))
            self.pi0_joint_table = _frozen(table)

    @property
    def n_nodes(self) -> int:
        return len(self.cards)

    @property
    def joint_size(self) -> int:
        return int(np.prod(self.cards, dtype=np.int64))

    def n_configs(self, k) -> int:
        return self.rates[k].shape[0]

    def config_index(self, k, joint_states) -> np.ndarray:
        """Parent configuration of node ``k`` for joint state row(s)."""
        X = np.asarray(joint_states, dtype=np.int64)
        if not self.parents[k]:
            return np.zeros(X.shape[:-1], dtype=np.int64)
        return X[..., list(self.parents[k])] @ self._strides[k]

    def parent_stride(self, child, parent) -> int:
        return int(self._strides[child][self.parents[child].index(parent)])

    def generator(self, k, config) -> np.ndarray:
        return self.rates[k][config]

    def pi0_joint(self) -> np.ndarray:
        """Initial distribution over raveled joint states."""
        if self.pi0_joint_table is not None:
            return self.pi0_joint_table.reshape(-1).copy()
        out = np.ones(1)
        for p in self.pi0_product:
            out = np.outer(out, p).reshape(-1)
        return out

    def node_marginal_pi0(self, k) -> np.ndarray:
        if self.pi0_product is not None:
            return self.pi0_product[k]
        axes = tuple(i for i in range(self.n_nodes) if i != k)
        return self.pi0_joint_table.sum(axis=axes)

    def initial_conditional(self, k, s0) -> np.ndarray:
        """``pi0(s^k | s^{other nodes})``."""
        if self.pi0_product is not None:
            return self.pi0_product[k]
        idx = list(np.asarray(s0, dtype=np.int64))
        idx[k] = slice(None)
        p = self.pi0_joint_table[tuple(idx)]
        z = p.sum()
        if not z > 0:
            raise ModelError("other nodes' initial states have zero probability")
        return p / z

    def sample_initial(self, rng) -> np.ndarray:
        if self.pi0_product is not None:
            return np.array([_categorical(p, rng) for p in self.pi0_product], dtype=np.int64)
        flat = _categorical(self.pi0_joint_table.reshape(-1), rng)
        return np.array(np.unravel_index(flat, self.cards), dtype=np.int64)

    def is_sparse(self, k) -> bool:
        return bool(np.mean(self.rates[k] == 0) >= SPARSE_ZERO_FRACTION)


def _categorical(p, rng) -> int:
    cum = np.cumsum(p)
    return min(int(np.searchsorted(cum, rng.random() * cum[-1], side="right")), len(p) - 1)


@dataclass(frozen=True)
class CtbnTrajectory:
    """Sparse joint path: initial joint state plus ``(time, node, new state)``."""

    s0: np.ndarray
    times: np.ndarray
    nodes: np.ndarray
    states: np.ndarray
    interval: TimeInterval
    _joint: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        interval = TimeInterval.coerce(self.interval)
        s0 = np.array(self.s0, dtype=np.int64).reshape(-1)
        times = np.array(self.times, dtype=float).reshape(-1)
        nodes = np.array(self.nodes, dtype=np.int64).reshape(-1)
        states = np.array(self.states, dtype=np.int64).reshape(-1)
        if not times.shape == nodes.shape == states.shape:
            raise ModelError("times, nodes and states must have equal length")
        if times.size:
            if times[0] <= interval.start or times[-1] > interval.end:
                raise ModelError("jump times must lie in (t_start, t_end]")
            if np.any(np.diff(times) <= 0):
                raise ModelError("jump times must be strictly increasing")
            if nodes.min() < 0 or nodes.max() >= s0.size:
                raise ModelError("jump refers to an unknown node")
        n = times.size
        joint = np.empty((n + 1, s0.size), dtype=np.int64)
        joint[0] = s0
        steps = np.arange(1, n + 1)
        for k in range(s0.size):
            pos = np.zeros(n + 1, dtype=np.int64)
            pos[1:] = np.where(nodes == k, steps, 0)
            pos = np.maximum.accumulate(pos)
            if n:
                joint[:, k] = np.where(pos == 0, s0[k], states[np.maximum(pos, 1) - 1])
        if n and np.any(joint[np.arange(n), nodes] == states):
            raise ModelError("a jump leaves its node in the same state")
        for name, val in (("interval", interval), ("s0", _frozen(s0)), ("times", _frozen(times)),
                          ("nodes", _frozen(nodes)), ("states", _frozen(states)),
                          ("_joint", _frozen(joint))):
            object.__setattr__(self, name, val)

    def __eq__(self, other):
        if not isinstance(other, CtbnTrajectory):
            return NotImplemented
        return (self.interval == other.interval and np.array_equal(self.s0, other.s0)
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.nodes, other.nodes)
                and np.array_equal(self.states, other.states))

    __hash__ = None

    @property
    def n_nodes(self) -> int:
        return self.s0.size

    @property
    def n_jumps(self) -> int:
        return self.times.size

    def joint_states(self) -> np.ndarray:
        """``(n_jumps + 1, n_nodes)``: joint state on each constant piece."""
        return self._joint

    @property
    def breakpoints(self) -> np.ndarray:
        return np.concatenate(([self.interval.start], self.times, [self.interval.end]))

    def state_at(self, t) -> np.ndarray:
        return self._joint[np.searchsorted(self.times, t, side="right")]

    def node_path(self, k) -> Trajectory:
        mask = self.nodes == k
        return Trajectory(self.s0[k], self.times[mask], self.states[mask], self.interval)

    def splice(self, k, path: Trajectory) -> "CtbnTrajectory":
        """Replace node ``k``'s path, keeping every other node's jumps."""
        keep = self.nodes != k
        times = np.concatenate((self.times[keep], path.times))
        order = np.argsort(times, kind="stable")
        times = times[order]
        if np.any(np.diff(times) == 0):
            raise ModelError("two nodes jump at the same time")
        nodes = np.concatenate((self.nodes[keep], np.full(path.n_jumps, k)))[order]
        states = np.concatenate((self.states[keep], path.states))[order]
        s0 = self.s0.copy()
        s0[k] = path.s0
        return CtbnTrajectory(s0, times, nodes, states, self.interval)

    @classmethod
    def from_node_paths(cls, paths) -> "CtbnTrajectory":
        interval = paths[0].interval
        times = np.concatenate([p.times for p in paths])
        nodes = np.concatenate([np.full(p.n_jumps, k) for k, p in enumerate(paths)])
        states = np.concatenate([p.states for p in paths])
        order = np.argsort(times, kind="stable")
        return cls([p.s0 for p in paths], times[order], nodes[order], states[order], interval)

    def to_flat(self, cards) -> Trajectory:
        """Path on the raveled product state space."""
        flat = np.ravel_multi_index(tuple(self._joint.T), tuple(cards))
        return Trajectory(flat[0], self.times, flat[1:], self.interval)

    @classmethod
    def from_flat(cls, traj: Trajectory, cards) -> "CtbnTrajectory":
        joint = np.array(np.unravel_index(traj.all_states, tuple(cards))).T
        diff = joint[1:] != joint[:-1]
        if np.any(diff.sum(axis=1) != 1):
            raise ModelError("flat path changes more than one node at a jump")
        nodes = np.argmax(diff, axis=1)
        states = joint[1:][np.arange(nodes.size), nodes]
        return cls(joint[0], traj.times, nodes, states, traj.interval)


def node_stats(joint: CtbnTrajectory, cards):
    """Per-node :class:`SufficientStats` (dwell per state, counts ``[to, from]``)."""
    return [sufficient_stats(joint.node_path(k), c) for k, c in enumerate(cards)]


def stats_vector(joint: CtbnTrajectory, cards) -> np.ndarray:
    """Concatenated per-node dwell times and off-diagonal counts."""
    return np.concatenate([s.flat() for s in node_stats(joint, cards)])


def stats_names(model: CtbnModel):
    names = []
    for k, c in enumerate(model.cards):
        nm = model.names[k]
        names += [f"{nm}.dwell_{s}" for s in range(c)]
        names += [f"{nm}.n_{i}_{j}" for i in range(c) for j in range(c) if i != j]
    return names


def flat_to_node_stats(stats: SufficientStats, cards) -> np.ndarray:
    """Project flat-space statistics onto the per-node layout of :func:`stats_vector`.

    ``stats`` needs ``dwell_time`` and ``transition_counts``; the counts may be
    a scipy sparse matrix of expected (non-integer) values.
    """
    cards = tuple(cards)
    X = np.array(np.unravel_index(np.arange(int(np.prod(cards))), cards)).T
    out = []
    counts = stats.transition_counts
    if hasattr(counts, "tocoo"):
        coo = counts.tocoo()
        to, frm, vals = coo.row, coo.col, coo.data.astype(float)
    else:
        counts = np.asarray(counts, dtype=float)
        to, frm = np.nonzero(counts)
        vals = counts[to, frm]
    dwell_all = np.asarray(stats.dwell_time, dtype=float)
    for k, c in enumerate(cards):
        dwell = np.bincount(X[:, k], weights=dwell_all, minlength=c)
        node_counts = np.zeros((c, c))
        changed = X[to, k] != X[frm, k]
        np.add.at(node_counts, (X[to[changed], k], X[frm[changed], k]), vals[changed])
        out.append(np.concatenate((dwell, node_counts[~np.eye(c, dtype=bool)])))
    return np.concatenate(out)


def ctbn_simulate(model: CtbnModel, interval, rng, s0=None) -> CtbnTrajectory:
    """Forward simulation by racing one exponential clock per node."""
    interval = TimeInterval.coerce(interval)
    s = model.sample_initial(rng) if s0 is None else np.array(s0, dtype=np.int64)
    first = s.copy()
    t = interval.start
    times, nodes, states = [], [], []
    m = model.n_nodes

    def exit_rate(k):
        return float(model.exit[k][model.config_index(k, s), s[k]])

    rates = np.array([exit_rate(k) for k in range(m)])
    while True:
        z = rng.standard_exponential(m)
        with np.errstate(divide="ignore"):
            z = np.where(rates > 0, z / np.where(rates > 0, rates, 1.0), np.inf)
        k = int(np.argmin(z))
        if not np.isfinite(z[k]) or t + z[k] > interval.end:
            break
        t += z[k]
        col = model.rates[k][model.config_index(k, s), :, s[k]].copy()
        col[s[k]] = 0.0
        s[k] = _categorical(col, rng)
        times.append(t)
        nodes.append(k)
        states.append(s[k])
        for j in (k,) + model.children[k]:
            rates[j] = exit_rate(j)
    return CtbnTrajectory(first, times, nodes, states, interval)


def amalgamate(model: CtbnModel, cap=AMALGAMATION_CAP, sparse=False):
    """Flat generator on the product space and the joint initial distribution."""
    from scipy import sparse as sp

    J = model.joint_size
    if J > cap:
        raise ModelError(f"product state space has {J} states, above the cap {cap}")
    X = np.array(np.unravel_index(np.arange(J), model.cards)).T
    idx = np.arange(J)
    strides = _mixed_radix_strides(model.cards)
    rows, cols, vals = [], [], []
    for k, c in enumerate(model.cards):
        cfg = model.config_index(k, X)
        sk = X[:, k]
        for v in range(c):
            rate = model.rates[k][cfg, v, sk]
            mask = (sk != v) & (rate > 0)
            rows.append(idx[mask] + (v - sk[mask]) * strides[k])
            cols.append(idx[mask])
            vals.append(rate[mask])
    rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    A = sp.coo_matrix((vals, (rows, cols)), shape=(J, J)).tocsc()
    A = A - sp.diags(np.asarray(A.sum(axis=0)).ravel())
    if sparse:
        return A.tocsc(), model.pi0_joint()
    return as_generator(A.toarray()), model.pi0_joint()


@dataclass(frozen=True)
class CtbnGibbsConfig:
    omega_multiplier: float = DEFAULT_K
    n_burnin: int = 0
    n_samples: int = 1000
    rng_seed: int | None = None
    random_scan: bool = False

    def __post_init__(self):
        if not self.omega_multiplier > 1:
            raise ModelError("omega multiplier k must be > 1")
        if self.n_burnin < 0 or self.n_samples < 0:
            raise ModelError("burn-in and sample counts must be nonnegative")


def _node_obs(obs, k):
    if obs is None:
        return None
    if isinstance(obs, dict):
        return obs.get(k)
    return obs[k]


def _parent_segments(joint: CtbnTrajectory, model: CtbnModel, k):
    """Jump times of node ``k``'s parents and the configuration on each segment."""
    mask = np.isin(joint.nodes, model.parents[k])
    rows = np.concatenate(([0], np.flatnonzero(mask) + 1))
    return joint.times[mask], model.config_index(k, joint.joint_states()[rows])


def _child_log_likelihoods(joint: CtbnTrajectory, model: CtbnModel, k, child, edges):
    """Contribution of one child's path to node ``k``'s window log-likelihoods."""
    c_k = model.cards[k]
    out = np.zeros((edges.size - 1, c_k))
    X = joint.joint_states()
    relevant = [child] + [p for p in model.parents[child] if p != k]
    jump_mask = np.isin(joint.nodes, relevant)
    cuts = np.union1d(edges, joint.times[jump_mask])
    starts, widths = cuts[:-1], np.diff(cuts)
    rows = np.searchsorted(joint.times, starts, side="right")
    Xs = X[rows].copy()
    Xs[:, k] = 0
    cfg = model.config_index(child, Xs)[:, None] + \
        model.parent_stride(child, k) * np.arange(c_k)[None, :]
    exit_rate = model.exit[child][cfg, Xs[:, child][:, None]]
    np.add.at(out, window_index(edges, starts), -widths[:, None] * exit_rate)
    jumps = np.flatnonzero(joint.nodes == child)
    if jumps.size:
        before = X[jumps].copy()
        old = before[:, child]
        before[:, k] = 0
        cfg = model.config_index(child, before)[:, None] + \
            model.parent_stride(child, k) * np.arange(c_k)[None, :]
        rate = model.rates[child][cfg, joint.states[jumps][:, None], old[:, None]]
        with np.errstate(divide="ignore"):
            np.add.at(out, window_index(edges, joint.times[jumps]), np.log(rate))
    return out


def node_window_log_likelihoods(joint: CtbnTrajectory, k, model: CtbnModel, obs, edges):
    """``L_i(s)`` for node ``k`` on windows cut at ``edges``: its own data plus
    the likelihood of every child's path as a function of node ``k``'s state."""
    edges = np.asarray(edges, dtype=float)
    own = _node_obs(obs, k)
    ll = own.window_log_likelihoods(edges) if own is not None \
        else np.zeros((edges.size - 1, model.cards[k]))
    for child in model.children[k]:
        ll = ll + _child_log_likelihoods(joint, model, k, child, edges)
    return ll


def node_gibbs_kernel(joint: CtbnTrajectory, k, model: CtbnModel, obs, k_multiplier, rng
                      ) -> CtbnTrajectory:
    """Resample node ``k``'s path given every other node."""
    if not k_multiplier >= 1:
        raise ModelError("omega multiplier must be >= 1")
    interval = joint.interval
    path = joint.node_path(k)
    seg_times, seg_cfg = _parent_segments(joint, model, k)
    exit_k = model.exit[k]
    omega_cfg = float(k_multiplier) * exit_k.max(axis=1)

    pieces = np.concatenate(([interval.start], np.union1d(seg_times, path.times),
                             [interval.end]))
    cfg = seg_cfg[np.searchsorted(seg_times, pieces[:-1], side="right")]
    seq = path.state_at(pieces[:-1])
    virtual = sample_piecewise_poisson(pieces, omega_cfg[cfg] + (-exit_k[cfg, seq]), rng)

    grid = np.concatenate((path.times, virtual))
    grid.sort()
    if grid.size > 1 and np.any(np.diff(grid) == 0):
        raise ModelError("duplicate grid time while merging virtual jumps")
    edges = np.concatenate(([interval.start], grid, [interval.end]))
    ll = node_window_log_likelihoods(joint, k, model, obs, edges)

    grid_cfg = seg_cfg[np.searchsorted(seg_times, grid, side="right")]
    used, index = np.unique(grid_cfg, return_inverse=True)
    if used.size == 0:
        used = seg_cfg[:1]
    stack = model.subordinated_stack(k, k_multiplier)[used]
    sparse = bool(np.mean(stack == 0) >= SPARSE_ZERO_FRACTION)
    problem = HmmProblem(model.initial_conditional(k, joint.s0), stack, index, ll, sparse)
    sample = ffbs_sample(problem, rng)
    return joint.splice(k, _relabel(interval, grid, sample.states))


def ctbn_gibbs_sweep(joint, model: CtbnModel, obs, config: CtbnGibbsConfig, rng):
    """Resample every node once, in ascending order unless ``random_scan``."""
    order = rng.permutation(model.n_nodes) if config.random_scan else range(model.n_nodes)
    for k in order:
        joint = node_gibbs_kernel(joint, int(k), model, obs, config.omega_multiplier, rng)
    return joint


def _envelope_generator(model, k):
    R = model.rates[k].max(axis=0)
    np.fill_diagonal(R, 0.0)
    np.fill_diagonal(R, -R.sum(axis=0))
    return R


def ctbn_initial_trajectory(model: CtbnModel, obs, interval, rng, method="grid",
                            max_tries=100) -> CtbnTrajectory:
    """Starting joint path.

    ``"prior"`` simulates the network.  ``"grid"`` draws each node
    independently from a uniformized chain whose generator is the entrywise
    maximum over parent configurations, labelled by FFBS against that node's
    own observations; this respects noiseless data, and the first sweep then
    couples the nodes.
    """
    interval = TimeInterval.coerce(interval)
    if method == "prior":
        return ctbn_simulate(model, interval, rng)
    if method != "grid":
        raise ValueError(f"unknown initialization {method!r}")
    paths = []
    for k, c in enumerate(model.cards):
        own = _node_obs(obs, k) or NoObservations(c)
        paths.append(initial_trajectory(_envelope_generator(model, k), model.node_marginal_pi0(k),
                                        own, interval, rng, method="grid", max_tries=max_tries))
    return CtbnTrajectory.from_node_paths(paths)


def run_ctbn_chain(init, model: CtbnModel, obs, config: CtbnGibbsConfig, interval=None,
                   rng=None, callback=None, keep_paths=False):
    """Burn-in then ``n_samples`` sweeps; returns joint paths or a stats matrix."""
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    joint = init
    if joint is None:
        if interval is None:
            raise ModelError("an interval is required when no initial path is given")
        joint = ctbn_initial_trajectory(model, obs, interval, rng)
    out = []
    for i in range(config.n_burnin + config.n_samples):
        joint = ctbn_gibbs_sweep(joint, model, obs, config, rng)
        if callback is not None:
            callback(i, joint)
        if i >= config.n_burnin:
            out.append(joint if keep_paths else stats_vector(joint, model.cards))
    return out if keep_paths else np.array(out).reshape(len(out), -1)


class ProductObservations(ObservationModel):
    """Per-node observation models viewed on the raveled product space."""

    def __init__(self, node_obs, cards):
        self.cards = tuple(cards)
        self.node_obs = dict(node_obs) if isinstance(node_obs, dict) else dict(enumerate(node_obs))
        self.n_states = int(np.prod(self.cards))
        self._X = np.array(np.unravel_index(np.arange(self.n_states), self.cards)).T

    def window_log_likelihoods(self, edges):
        out = np.zeros((len(edges) - 1, self.n_states))
        for k, o in self.node_obs.items():
            if o is not None:
                out += o.window_log_likelihoods(edges)[:, self._X[:, k]]
        return out


def lotka_volterra_model(alpha, beta, gamma, delta, cap, pi0=None) -> CtbnModel:
    """Predator-prey CTBN on ``{0..cap}`` for both species.

    Node 0 is the prey ``x`` (parent: predator), node 1 the predator ``y``
    (parent: prey).  Rates: ``x -> x+1`` at ``alpha x``, ``x -> x-1`` at
    ``beta x y``, ``y -> y+1`` at ``delta x y``, ``y -> y-1`` at ``gamma y``;
    births out of ``cap`` are dropped.
    """
    if cap < 1:
        raise ModelError("cap must be at least 1")
    n = cap + 1
    pop = np.arange(n, dtype=float)
    prey = np.zeros((n, n, n))
    pred = np.zeros((n, n, n))
    up, down = np.arange(n - 1), np.arange(1, n)
    for other in range(n):
        prey[other, up + 1, up] = alpha * pop[up]
        prey[other, down - 1, down] = beta * pop[down] * other
        pred[other, up + 1, up] = delta * other * pop[up]
        pred[other, down - 1, down] = gamma * pop[down]
    for R in (prey, pred):
        idx = np.arange(n)
        R[:, idx, idx] = -R.sum(axis=1)
    return CtbnModel((n, n), [(1,), (0,)], [prey, pred], pi0=pi0, names=["prey", "predator"])


LV_NOISE_FLOOR = 1e-6


def lv_noise_log_probs(cap) -> np.ndarray:
    """``log p(X = x | S = s)`` as a ``(cap+1, cap+1)`` array ``[x, s]``,
    ``p proportional to 1 / (2**|x - s| + 1e-6)`` normalized over ``x``."""
    d = np.abs(np.arange(cap + 1)[:, None] - np.arange(cap + 1)[None, :])
    w = 1.0 / (np.exp2(d) + LV_NOISE_FLOOR)
    return np.log(w / w.sum(axis=0, keepdims=True))


def lv_observation_log_likelihoods(values, cap) -> np.ndarray:
    """Rows ``log p(X_j | S = .)`` for observed counts ``values``."""
    return lv_noise_log_probs(cap)[np.asarray(values, dtype=np.int64)]


def sample_lv_noise(states, cap, rng) -> np.ndarray:
    P = np.exp(lv_noise_log_probs(cap))
    return np.array([_categorical(P[:, s], rng) for s in np.asarray(states, dtype=np.int64)])


def chain_model(n_nodes=5, n_states=5, base_rate=0.25, pull_rate=2.0) -> CtbnModel:
    """Chain ``0 -> 1 -> ... -> n_nodes-1``.

    Every node jumps to each other state at ``base_rate``; a non-root node
    additionally jumps to its parent's current state at ``pull_rate``.
    """
    c = n_states
    root = np.full((c, c), base_rate)
    np.fill_diagonal(root, 0.0)
    np.fill_diagonal(root, -root.sum(axis=0))
    child = np.empty((c, c, c))
    for u in range(c):
        R = np.full((c, c), base_rate)
        R[u, :] += pull_rate
        np.fill_diagonal(R, 0.0)
        np.fill_diagonal(R, -R.sum(axis=0))
        child[u] = R
    rates = [root] + [child] * (n_nodes - 1)
    parents = [()] + [(k - 1,) for k in range(1, n_nodes)]
    return CtbnModel([c] * n_nodes, parents, rates, names=[f"x{k}" for k in range(n_nodes)])
