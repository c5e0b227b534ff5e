import json

import numpy as np
import pytest
from scipy import linalg, sparse

from mjpgibbs.diagnostics import (ORACLE_MAX_STATES, average_relative_error, batch_means_se,
                                  bridge_marginal, enumerate_hmm_posterior, ess_report,
                                  effective_sample_size, exact_smoothed_marginals,
                                  expected_path_statistics, matrix_exponential)
from mjpgibbs.errors import ImpossibleObservationsError, ModelError
from mjpgibbs.gibbs import DiscreteObservations

from conftest import random_generator


def test_expm_examples():
    assert np.array_equal(matrix_exponential(np.zeros((3, 3)), 2.0), np.eye(3))
    A = np.array([[-1.0, 1.0], [1.0, -1.0]])
    for t in (0.1, 1.0, 7.5):
        P = matrix_exponential(A, t)
        e = np.exp(-2 * t)
        assert np.allclose(P, [[(1 + e) / 2, (1 - e) / 2], [(1 - e) / 2, (1 + e) / 2]],
                           atol=1e-14)
    assert matrix_exponential(A, 1.0)[0, 0] == pytest.approx(0.56767, abs=1e-5)


@pytest.mark.parametrize("scale", [1e-3, 0.3, 2.0, 40.0])
def test_expm_matches_scipy(scale):
    rng = np.random.default_rng(int(scale * 1000))
    for n in (2, 5, 12):
        M = rng.normal(size=(n, n)) * scale
        ref = linalg.expm(M)
        assert np.max(np.abs(matrix_exponential(M) - ref)) <= 1e-11 * max(1.0, np.abs(ref).max())


def test_expm_semigroup_and_stochasticity(rng):
    for n in (2, 4, 8):
        A = random_generator(n, rng, scale=2.0)
        s, t = rng.random(2) * 3
        lhs = matrix_exponential(A, s + t)
        assert np.allclose(lhs, matrix_exponential(A, s) @ matrix_exponential(A, t), atol=1e-9)
        assert np.max(np.abs(lhs.sum(axis=0) - 1)) < 1e-9 and lhs.min() >= 0


def test_expm_rejects_nonfinite():
    with pytest.raises(ModelError):
        matrix_exponential([[np.nan]])


def test_smoothed_marginals_without_data(rng):
    A = random_generator(3, rng)
    pi0 = np.array([0.6, 0.3, 0.1])
    q = np.array([0.0, 0.4, 2.0])
    out = exact_smoothed_marginals(A, pi0, None, q)
    for i, t in enumerate(q):
        assert np.allclose(out[i], matrix_exponential(A, t) @ pi0, atol=1e-12)


def test_smoothed_marginals_bridge_closed_form():
    A = np.array([[-1.0, 1.0], [1.0, -1.0]])
    obs = DiscreteObservations.exact([0.0, 2.0], [0, 0], 2)
    out = exact_smoothed_marginals(A, [0.5, 0.5], obs, [1.0])[0]
    p = (1 + np.exp(-2.0)) / 2
    assert out[0] == pytest.approx(p * p / ((1 + np.exp(-4.0)) / 2), abs=1e-10)
    assert np.allclose(out, bridge_marginal(A, 0, 0, 1.0, 2.0), atol=1e-12)


def test_smoothed_marginal_point_mass_at_observation():
    A = np.array([[-1.0, 2.0, 0.0], [1.0, -3.0, 1.0], [0.0, 1.0, -1.0]])
    obs = DiscreteObservations.exact([0.7], [2], 3)
    out = exact_smoothed_marginals(A, [1 / 3] * 3, obs, [0.7])[0]
    assert np.array_equal(out, [0.0, 0.0, 1.0])


def test_single_start_observation_reweights_pi0(rng):
    A = random_generator(4, rng)
    pi0 = np.full(4, 0.25)
    lik = np.array([0.1, 0.2, 0.3, 0.4])
    obs = DiscreteObservations([0.0], np.log(lik)[None])
    q = np.array([0.0, 0.5, 1.5])
    out = exact_smoothed_marginals(A, pi0, obs, q)
    w = pi0 * lik / np.dot(pi0, lik)
    for i, t in enumerate(q):
        assert np.allclose(out[i], matrix_exponential(A, t) @ w, atol=1e-9)


def test_oracle_limits_and_errors():
    big = np.zeros((ORACLE_MAX_STATES + 1,) * 2)
    with pytest.raises(ModelError):
        exact_smoothed_marginals(big, np.full(17, 1 / 17), None, [0.0])
    A = np.array([[-1.0, 0.0], [1.0, 0.0]])
    obs = DiscreteObservations.exact([1.0], [0], 2)
    with pytest.raises(ImpossibleObservationsError):
        exact_smoothed_marginals(A, [0, 1], obs, [0.5])


def test_expected_statistics_match_dense_route():
    # dwell time of a 2-state bridge, cross-checked with a Van Loan block exponential
    A = np.array([[-1.0, 2.0], [1.0, -2.0]])
    T = 1.5
    dwell, counts = expected_path_statistics(A, [1.0, 0.0], [0.0, 1.0], T, n_grid=801)
    P = linalg.expm(A * T)
    ref_dwell = []
    for s in range(2):
        E = np.zeros((2, 2))
        E[s, s] = 1.0
        block = np.block([[A, E], [np.zeros((2, 2)), A]])
        integral = linalg.expm(block * T)[:2, 2:]
        ref_dwell.append(integral[1, 0] / P[1, 0])
    assert np.allclose(dwell, ref_dwell, atol=1e-8)
    assert abs(dwell.sum() - T) < 1e-8
    c = counts.toarray()
    assert c[1, 0] - c[0, 1] == pytest.approx(1.0, abs=1e-8)
    d2, c2 = expected_path_statistics(sparse.csc_matrix(A), [1.0, 0.0], [0.0, 1.0], T, 801)
    assert np.allclose(d2, dwell) and np.allclose(c2.toarray(), c)


def test_enumeration_normalizes():
    B = np.array([[0.9, 0.2], [0.1, 0.8]])
    paths, probs, log_z = enumerate_hmm_posterior([0.5, 0.5], [B, B], np.zeros((3, 2)))
    assert paths.shape == (8, 3) and probs.sum() == pytest.approx(1.0)
    assert log_z == pytest.approx(0.0, abs=1e-14)


def test_ess_white_noise():
    for seed in range(5):
        x = np.random.default_rng(seed).normal(size=5000)
        assert abs(effective_sample_size(x) / 5000 - 1) < 0.1


def test_ess_ar1():
    rng = np.random.default_rng(0)
    n, phi = 100_000, 0.9
    e = rng.normal(size=n)
    x = np.empty(n)
    x[0] = e[0]
    for i in range(1, n):
        x[i] = phi * x[i - 1] + e[i]
    ratio = effective_sample_size(x) / n
    assert abs(ratio - (1 - phi) / (1 + phi)) < 0.2 * (1 - phi) / (1 + phi)


def test_ess_constant_and_invariance():
    ess, flag = effective_sample_size(np.full(50, 3.0), return_flag=True)
    assert ess == 50 and flag
    x = np.cumsum(np.random.default_rng(1).normal(size=2000)) * 0.01
    base = effective_sample_size(x)
    assert 0 < base <= 2000
    assert effective_sample_size(-3.0 * x + 7.0) == pytest.approx(base, rel=1e-9)
    with pytest.raises(ModelError):
        effective_sample_size(np.arange(5.0))


def test_ess_report_json():
    rng = np.random.default_rng(2)
    x = np.column_stack([rng.normal(size=500), np.zeros(500)])
    rep = ess_report(x, 2.0)
    doc = json.loads(rep.to_json())
    assert {"median_ess", "ess_per_second", "per_statistic"} <= set(doc)
    assert rep.constant_statistics == [1]
    assert rep.ess_per_second == pytest.approx(rep.median_ess / 2.0)


def test_relative_error_examples():
    assert average_relative_error([1.0, 2.0], [1.0, 2.0]).total == 0.0
    rep = average_relative_error([2.0, 3.0], [1.0, 2.0])
    assert rep.total == pytest.approx(1.5)
    rep = average_relative_error([2.0, 5.0, 3.0], [1.0, 0.0, 2.0])
    assert rep.total == pytest.approx(1.5) and rep.excluded == [1]
    assert json.loads(rep.to_json())["avg_relative_error"] == pytest.approx(1.5)
    with pytest.raises(ModelError):
        average_relative_error([1.0], [0.0])


def test_batch_means_iid_scale():
    x = np.random.default_rng(3).normal(size=20_000)
    se = batch_means_se(x)
    assert 0.5 < se / (1 / np.sqrt(20_000)) < 1.6
    assert batch_means_se(np.ones((40, 3))).shape == (3,)
