import numpy as np
import pytest

from mjpgibbs.diagnostics import enumerate_hmm_posterior
from mjpgibbs.errors import ImpossibleObservationsError, ModelError
from mjpgibbs.ffbs import HmmProblem, _to_csc, ffbs_sample, ffbs_sample_many, forward_marginals


def random_stochastic(n, rng, zeros=0.0):
    B = rng.random((n, n)) + 0.05
    B[rng.random((n, n)) < zeros] = 0.0
    B[np.arange(n), np.arange(n)] += 0.1
    return B / B.sum(axis=0)


def random_problem(n, steps, rng, shared=False, sparse=None):
    mats = random_stochastic(n, rng) if shared else np.stack(
        [random_stochastic(n, rng) for _ in range(steps - 1)])
    ll = np.log(rng.random((steps, n)) + 1e-3)
    pi0 = rng.random(n) + 0.1
    return HmmProblem.from_matrices(pi0 / pi0.sum(), mats, ll, sparse=sparse)


def test_single_step_uniform(backend):
    prob = HmmProblem.from_matrices(np.full(3, 1 / 3), np.eye(3), np.full((1, 3), np.log(0.2)))
    draws = ffbs_sample_many(prob, np.random.default_rng(0), 30_000, backend=backend)
    freq = np.bincount(draws[:, 0], minlength=3) / 30_000
    assert np.allclose(freq, 1 / 3, atol=0.015)
    _, log_z = forward_marginals(prob, backend=backend)
    assert log_z == pytest.approx(np.log(0.2), abs=1e-14)


def test_terminal_observation(backend):
    ll = np.array([[0.0, 0.0], [-np.inf, 0.0]])
    prob = HmmProblem.from_matrices([0.7, 0.3], np.full((2, 2), 0.5), ll)
    draws = ffbs_sample_many(prob, np.random.default_rng(1), 40_000, backend=backend)
    assert np.all(draws[:, 1] == 1)
    assert abs(np.mean(draws[:, 0] == 0) - 0.7) < 0.01


def test_pure_prediction(backend):
    rng = np.random.default_rng(2)
    B = random_stochastic(4, rng)
    pi0 = np.array([0.1, 0.2, 0.3, 0.4])
    prob = HmmProblem.from_matrices(pi0, B, np.zeros((6, 4)))
    filtered, log_z = forward_marginals(prob, backend=backend)
    p = pi0
    for t in range(6):
        assert np.allclose(filtered[t], p, atol=1e-14)
        p = B @ p
    assert abs(log_z) < 1e-14


def test_identity_keeps_point_mass(backend):
    prob = HmmProblem.from_matrices([0, 1, 0], np.eye(3), np.zeros((5, 3)))
    filtered, _ = forward_marginals(prob, backend=backend)
    assert np.array_equal(filtered, np.tile([0.0, 1.0, 0.0], (5, 1)))


@pytest.mark.parametrize("n,steps", [(2, 6), (3, 5), (4, 4)])
def test_marginals_match_enumeration(n, steps, backend):
    rng = np.random.default_rng(n * 10 + steps)
    prob = random_problem(n, steps, rng)
    mats = [prob.transitions[i] for i in prob.index]
    paths, probs, log_z = enumerate_hmm_posterior(prob.pi0, mats, prob.log_likelihoods)
    _, fwd_log_z = forward_marginals(prob, backend=backend)
    assert abs(fwd_log_z - log_z) < 1e-10
    draws = ffbs_sample_many(prob, rng, 100_000, backend=backend)
    exact = np.stack([np.bincount(paths[:, t], weights=probs, minlength=n) for t in range(steps)])
    est = np.stack([np.bincount(draws[:, t], minlength=n) / draws.shape[0] for t in range(steps)])
    assert np.max(np.abs(est - exact)) < 0.005


def test_log_marginal_exact_on_shared_matrix(backend):
    rng = np.random.default_rng(7)
    prob = random_problem(3, 7, rng, shared=True)
    _, log_z = enumerate_hmm_posterior(prob.pi0, [prob.transitions[0]] * 6, prob.log_likelihoods)[1:]
    assert abs(forward_marginals(prob, backend=backend)[1] - log_z) < 1e-10


def test_sparse_matches_dense(backend):
    rng = np.random.default_rng(3)
    n = 30
    B = np.zeros((n, n))
    idx = np.arange(n)
    B[idx, idx] = 0.5
    B[np.minimum(idx + 1, n - 1), idx] += 0.25
    B[np.maximum(idx - 1, 0), idx] += 0.25
    ll = np.log(rng.random((200, n)))
    dense = HmmProblem.from_matrices(np.full(n, 1 / n), B, ll, sparse=False)
    sparse = HmmProblem.from_matrices(np.full(n, 1 / n), B, ll)
    assert sparse.sparse
    f1, z1 = forward_marginals(dense, backend=backend)
    f2, z2 = forward_marginals(sparse, backend=backend)
    assert np.allclose(f1, f2, atol=1e-13) and abs(z1 - z2) < 1e-9
    s1 = ffbs_sample(dense, np.random.default_rng(9), backend=backend).states
    s2 = ffbs_sample(sparse, np.random.default_rng(9), backend=backend).states
    assert np.array_equal(s1, s2)


def test_csc_layout_round_trip():
    rng = np.random.default_rng(4)
    stack = np.stack([random_stochastic(5, rng, zeros=0.6) for _ in range(3)])
    indptr, indices, data = _to_csc(stack)
    for m in range(3):
        rebuilt = np.zeros((5, 5))
        for col in range(5):
            sl = slice(indptr[m, col], indptr[m, col + 1])
            rebuilt[indices[sl], col] = data[sl]
        assert np.array_equal(rebuilt, stack[m])


def test_long_chain_with_tiny_likelihoods(backend):
    rng = np.random.default_rng(5)
    steps, n = 100_000, 3
    ll = -1e4 * rng.random((steps, n))
    prob = HmmProblem.from_matrices(np.full(n, 1 / n), random_stochastic(n, rng), ll)
    filtered, log_z = forward_marginals(prob, backend=backend)
    assert np.isfinite(log_z) and log_z < -1e8
    assert np.max(np.abs(filtered.sum(axis=1) - 1.0)) < 1e-12
    states = ffbs_sample(prob, rng, backend=backend).states
    assert states.shape == (steps,)


def test_impossible_observations_raise(backend):
    ll = np.zeros((4, 2))
    ll[2] = -np.inf
    prob = HmmProblem.from_matrices([0.5, 0.5], np.full((2, 2), 0.5), ll)
    with pytest.raises(ImpossibleObservationsError) as info:
        ffbs_sample(prob, np.random.default_rng(0), backend=backend)
    assert info.value.step == 2
    unreachable = HmmProblem.from_matrices([1, 0], np.eye(2), np.array([[0, 0], [-np.inf, 0]]))
    with pytest.raises(ImpossibleObservationsError):
        forward_marginals(unreachable, backend=backend)


def test_problem_validation():
    with pytest.raises(ModelError):
        HmmProblem.from_matrices([0.5, 0.5], [[0.5, 0.6], [0.6, 0.4]], np.zeros((2, 2)))
    with pytest.raises(ModelError):
        HmmProblem.from_matrices([0.5, 0.5], np.eye(2), np.full((2, 2), np.nan))
    with pytest.raises(ModelError):
        HmmProblem([0.5, 0.5], np.eye(2)[None], np.array([0, 1]), np.zeros((3, 2)))
    with pytest.raises(ModelError):
        HmmProblem.from_matrices([1.0], np.eye(2), np.zeros((2, 2)))


def test_many_equals_repeated_single(backend):
    rng_a, rng_b = np.random.default_rng(11), np.random.default_rng(11)
    prob = random_problem(3, 8, np.random.default_rng(0))
    many = ffbs_sample_many(prob, rng_a, 5, backend=backend)
    single = [ffbs_sample(prob, rng_b, backend=backend).states for _ in range(5)]
    assert np.array_equal(many, np.stack(single))


def test_backends_agree():
    from mjpgibbs import kernels
    if kernels.compiled_backend is None:
        pytest.skip("compiled kernels not built")
    rng = np.random.default_rng(6)
    for sparse in (False, True):
        prob = random_problem(6, 500, rng, sparse=sparse)
        f_py, z_py = forward_marginals(prob, backend="python")
        f_c, z_c = forward_marginals(prob, backend="cython")
        assert np.allclose(f_py, f_c, atol=1e-13) and abs(z_py - z_c) < 1e-9
        s_py = ffbs_sample(prob, np.random.default_rng(1), backend="python").states
        s_c = ffbs_sample(prob, np.random.default_rng(1), backend="cython").states
        assert np.array_equal(s_py, s_c)
