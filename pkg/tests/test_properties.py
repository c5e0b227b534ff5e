"""Property tests over randomly drawn generators, paths and data."""
import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mjpgibbs.bayes import RatePrior, sample_rate_posterior
from mjpgibbs.core import (generator_from_rates, gillespie_sample, path_log_density,
                           sufficient_stats)
from mjpgibbs.ctbn import (CtbnTrajectory, amalgamate, chain_model, ctbn_simulate,
                           flat_to_node_stats, stats_vector)
from mjpgibbs.diagnostics import (average_relative_error, effective_sample_size,
                                  enumerate_hmm_posterior, matrix_exponential)
from mjpgibbs.errors import ImpossibleObservationsError
from mjpgibbs.ffbs import HmmProblem, ffbs_sample, forward_marginals
from mjpgibbs.gibbs import DiscreteObservations, gibbs_kernel, initial_trajectory
from mjpgibbs.mmpp import PoissonObservations
from mjpgibbs.uniformization import (augment, dominating_rate, sample_virtual_jumps,
                                     subordinated_transition_matrix, thin)

SETTINGS = settings(max_examples=40, deadline=None,
                    suppress_health_check=[HealthCheck.too_slow])

seeds = st.integers(0, 2**32 - 1)
n_states = st.integers(2, 4)


@st.composite
def generators(draw, n=None, positive=False):
    n = draw(n_states) if n is None else n
    lo = 0.05 if positive else 0.0
    off = draw(arrays(float, (n, n), elements=st.floats(lo, 5.0, allow_nan=False)))
    return generator_from_rates(off)


@st.composite
def distributions(draw, n):
    w = draw(arrays(float, n, elements=st.floats(0.01, 1.0)))
    return w / w.sum()


def assert_generator(A):
    off = ~np.eye(A.shape[0], dtype=bool)
    assert np.all(A[off] >= 0) and np.all(np.diagonal(A) <= 0)
    assert np.all(np.abs(A.sum(axis=0)) <= 1e-9)


def assert_trajectory(traj):
    t = traj.times
    assert t.size == traj.states.size
    assert np.all(np.diff(t) > 0)
    if t.size:
        assert traj.interval.start < t[0] and t[-1] <= traj.interval.end
        prev = np.concatenate(([traj.s0], traj.states[:-1]))
        assert np.all(traj.states != prev)


@SETTINGS
@given(generators())
def test_generator_invariants(A):
    assert_generator(A)


@SETTINGS
@given(generators(), st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_expm_semigroup_and_stochastic(A, s, t):
    Ps, Pt, Pst = (matrix_exponential(A, x) for x in (s, t, s + t))
    assert np.allclose(Pst, Ps @ Pt, atol=1e-9)
    assert np.all(Pst >= -1e-12)
    assert np.allclose(Pst.sum(axis=0), 1.0, atol=1e-9)


@SETTINGS
@given(generators(), st.floats(1.0, 3.0))
def test_subordinated_matrix_stochastic(A, k):
    omega = dominating_rate(A, k) if np.any(A) else 1.0
    B = subordinated_transition_matrix(A, omega)
    assert np.all(B >= 0)
    assert np.allclose(B.sum(axis=0), 1.0, atol=1e-12)


@SETTINGS
@given(st.data(), seeds, st.floats(0.1, 5.0))
def test_gillespie_paths_and_statistics(data, seed, length):
    A = data.draw(generators())
    n = A.shape[0]
    pi0 = data.draw(distributions(n))
    traj = gillespie_sample(A, pi0, (1.0, 1.0 + length), np.random.default_rng(seed))
    assert_trajectory(traj)
    stats = sufficient_stats(traj, n)
    assert abs(stats.dwell_time.sum() - length) <= 1e-9
    assert stats.n_transitions == traj.n_jumps
    off = ~np.eye(n, dtype=bool)
    counts = stats.transition_counts
    if np.any(counts[~off]) or np.any((counts > 0) & (A <= 0)):
        pytest.fail("transition along a zero rate or self-transition")
    with np.errstate(divide="ignore"):
        logA = np.where(off & (counts > 0), np.log(np.where(A > 0, A, 1.0)), 0.0)
    expected = np.log(pi0[traj.s0]) + np.sum(counts * logA) - stats.dwell_time @ -np.diagonal(A)
    assert path_log_density(traj, A, pi0) == pytest.approx(expected, abs=1e-10)


@SETTINGS
@given(st.data(), seeds, st.floats(1.01, 4.0))
def test_thin_inverts_augment(data, seed, k):
    A = data.draw(generators(positive=True))
    rng = np.random.default_rng(seed)
    traj = gillespie_sample(A, np.full(A.shape[0], 1.0 / A.shape[0]), (0.0, 3.0), rng)
    virtual = sample_virtual_jumps(traj, A, dominating_rate(A, k), rng)
    path = augment(traj, virtual)
    assert path.times.size == traj.n_jumps + virtual.times.size
    assert thin(path) == traj


@SETTINGS
@given(st.data(), seeds)
def test_gibbs_sweep_respects_exact_data(data, seed):
    A = data.draw(generators(positive=True))
    n = A.shape[0]
    rng = np.random.default_rng(seed)
    times = np.sort(rng.random(3) * 4.0)
    states = rng.integers(n, size=3)
    obs = DiscreteObservations.exact(times, states, n)
    pi0 = np.full(n, 1.0 / n)
    traj = initial_trajectory(A, pi0, obs, (0.0, 4.0), rng, method="grid")
    assert np.array_equal(traj.state_at(times), states)
    for _ in range(3):
        traj = gibbs_kernel(traj, A, pi0, obs, dominating_rate(A, 2.0), rng)
        assert_trajectory(traj)
        assert np.array_equal(traj.state_at(times), states)


@SETTINGS
@given(st.data(), seeds)
def test_ffbs_marginals_and_support(data, seed):
    n = data.draw(n_states)
    steps = data.draw(st.integers(1, 4))
    rng = np.random.default_rng(seed)
    B = rng.dirichlet(np.ones(n), size=n).T
    B[rng.random((n, n)) < 0.3] = 0.0
    np.fill_diagonal(B, np.maximum(np.diagonal(B), 0.1))
    B /= B.sum(axis=0)
    ll = np.log(rng.random((steps + 1, n)))
    ll[rng.random(ll.shape) < 0.2] = -np.inf
    ll[:, 0] = np.maximum(ll[:, 0], -1.0)
    pi0 = np.full(n, 1.0 / n)
    try:
        _, _, enum_log_z = enumerate_hmm_posterior(pi0, [B] * steps, ll)
    except ImpossibleObservationsError:
        assume(False)
    problem = HmmProblem.from_matrices(pi0, B, ll)
    alpha, log_z = forward_marginals(problem)
    assert np.allclose(alpha.sum(axis=1), 1.0, atol=1e-12)
    assert log_z == pytest.approx(enum_log_z, abs=1e-10)
    path = ffbs_sample(problem, rng).states
    assert np.all(np.isfinite(ll[np.arange(steps + 1), path]))
    assert np.all(B[path[1:], path[:-1]] > 0)


@SETTINGS
@given(seeds, st.lists(st.floats(0.01, 9.99), min_size=1, max_size=6, unique=True))
def test_window_likelihoods_additive(seed, cuts):
    rng = np.random.default_rng(seed)
    t_obs = np.sort(rng.random(15) * 10.0)
    edges = np.concatenate(([0.0], np.sort(cuts), [10.0]))
    for obs in (DiscreteObservations(t_obs, np.log(rng.random((15, 3)))),
                PoissonObservations(t_obs, rng.random(3) * 4.0)):
        whole = obs.window_log_likelihoods([0.0, 10.0])[0]
        split = obs.window_log_likelihoods(edges).sum(axis=0)
        assert np.allclose(whole, split, atol=1e-10)


@SETTINGS
@given(seeds, st.floats(-100.0, 100.0).filter(lambda a: abs(a) > 1e-3),
       st.floats(-1e3, 1e3))
def test_ess_shift_scale_invariant(seed, a, b):
    x = np.cumsum(np.random.default_rng(seed).normal(size=500)) * 0.1
    base = effective_sample_size(x)
    assert 0 < base <= x.size
    assert effective_sample_size(a * x + b) == pytest.approx(base, rel=1e-8)


@SETTINGS
@given(arrays(float, 6, elements=st.floats(0.0, 10.0)),
       arrays(float, 6, elements=st.one_of(st.just(0.0), st.floats(0.01, 10.0))))
def test_relative_error_definition(est, ref):
    assume(np.any(ref > 0))
    total = average_relative_error(est, ref).total
    keep = ref > 0
    assert total == pytest.approx(np.sum(np.abs(est[keep] - ref[keep]) / ref[keep]))


@SETTINGS
@given(st.data(), seeds, st.floats(0.0, 5.0))
def test_rate_posterior_emits_generators(data, seed, length):
    n = data.draw(n_states)
    rng = np.random.default_rng(seed)
    A0 = generator_from_rates(rng.random((n, n)))
    traj = gillespie_sample(A0, np.full(n, 1.0 / n), (0.0, length + 1e-3), rng)
    prior = RatePrior(data.draw(st.floats(0.1, 3.0)), data.draw(st.floats(0.1, 3.0)),
                      data.draw(st.floats(0.1, 3.0)))
    assert_generator(sample_rate_posterior(sufficient_stats(traj, n), prior, rng))


@SETTINGS
@given(seeds, st.integers(2, 3), st.integers(2, 3))
def test_ctbn_paths_one_node_per_jump(seed, n_nodes, card):
    model = chain_model(n_nodes, card)
    joint = ctbn_simulate(model, (0.0, 5.0), np.random.default_rng(seed))
    states = joint.joint_states()
    changed = (np.diff(states, axis=0) != 0).sum(axis=1)
    assert np.all(changed == 1)
    assert np.array_equal(np.flatnonzero(np.diff(states, axis=0))
                          % n_nodes, joint.nodes)
    flat = joint.to_flat(model.cards)
    assert CtbnTrajectory.from_flat(flat, model.cards) == joint
    node = flat_to_node_stats(sufficient_stats(flat, model.joint_size), model.cards)
    assert np.allclose(node, stats_vector(joint, model.cards))


@SETTINGS
@given(st.integers(1, 3), st.integers(2, 3))
def test_amalgamation_is_generator(n_nodes, card):
    A, pi0 = amalgamate(chain_model(n_nodes, card))
    assert_generator(np.asarray(A))
    assert pi0.sum() == pytest.approx(1.0, abs=1e-12)
