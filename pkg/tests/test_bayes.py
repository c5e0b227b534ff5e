import io

import numpy as np
import pytest
from scipy import stats

from mjpgibbs.bayes import (InitialDistMode, RatePrior, empty_stats, full_bayes_chain,
                            mh_rate_update, off_diagonal, posterior_parameters,
                            sample_dirichlet, sample_rate_posterior, stationary_distribution,
                            write_posterior_csv)
from mjpgibbs.core import SufficientStats, Trajectory, as_generator, sufficient_stats
from mjpgibbs.diagnostics import batch_means_se, effective_sample_size
from mjpgibbs.errors import ModelError
from mjpgibbs.gibbs import DiscreteObservations, GibbsConfig, NoObservations, gibbs_kernel
from mjpgibbs.uniformization import dominating_rate

from conftest import random_generator


def test_posterior_parameters_by_hand():
    traj = Trajectory(0, [0.5, 1.2, 2.0, 2.6], [1, 2, 0, 2], (0.0, 3.0))
    st = sufficient_stats(traj, 3)
    assert np.allclose(st.dwell_time, [0.5 + 0.6, 0.7, 0.8 + 0.4])
    post = posterior_parameters(st, RatePrior(1.5, 2.0, 0.5))
    assert np.array_equal(post.shape, [1.5 + 2, 1.5 + 1, 1.5 + 1])
    assert np.allclose(post.rate, 2.0 + st.dwell_time)
    expected = np.array([[0.0, 0.5, 1.5],
                         [1.5, 0.0, 0.5],
                         [1.5, 1.5, 0.0]])
    assert np.array_equal(post.concentration, expected)


def test_matrix_beta_and_validation():
    beta = np.arange(9.0).reshape(3, 3) + 1
    c = RatePrior(1, 1, beta).concentration(3)
    assert np.all(np.diag(c) == 0) and c[0, 1] == 2.0
    with pytest.raises(ModelError):
        RatePrior(1, 1, np.ones((2, 2))).concentration(3)
    with pytest.raises(ModelError):
        RatePrior(0.0, 1.0)
    with pytest.raises(ModelError):
        RatePrior(1.0, 1.0, -1.0)


def test_gamma_posterior_mean():
    st = SufficientStats(np.array([4.0, 1.0]), np.array([[0, 0], [6, 0]]))
    rng = np.random.default_rng(0)
    draws = np.array([-sample_rate_posterior(st, RatePrior(1, 1), rng)[0, 0]
                      for _ in range(100_000)])
    assert abs(draws.mean() - 1.4) < 3 * draws.std() / np.sqrt(draws.size)


def test_two_state_dirichlet_degenerates(rng):
    for _ in range(20):
        A = sample_rate_posterior(empty_stats(2), RatePrior(1, 1, 0.3), rng)
        assert A[1, 0] == -A[0, 0] and A[0, 1] == -A[1, 1]
        as_generator(A)
    assert np.array_equal(sample_rate_posterior(empty_stats(1), RatePrior(), rng), [[0.0]])


def test_empty_stats_reproduce_prior(rng):
    prior = RatePrior(3.0, 2.0, 1.0)
    draws = np.array([-np.diag(sample_rate_posterior(empty_stats(3), prior, rng))
                      for _ in range(5000)])
    for s in range(3):
        assert stats.kstest(draws[:, s], stats.gamma(3.0, scale=0.5).cdf).pvalue > 0.001


def test_dirichlet_small_concentration(rng):
    alpha = np.array([0.02, 0.02, 2.0])
    draws = np.array([sample_dirichlet(alpha, rng) for _ in range(20_000)])
    assert np.allclose(draws.sum(axis=1), 1.0)
    assert np.all(draws > 0)
    assert np.allclose(draws.mean(axis=0), alpha / alpha.sum(), atol=0.01)


def test_stationary_examples(rng):
    assert np.allclose(stationary_distribution([[-1.0, 1.0], [1.0, -1.0]]), [0.5, 0.5])
    assert np.allclose(stationary_distribution([[-1.0, 2.0], [1.0, -2.0]]), [2 / 3, 1 / 3],
                       atol=1e-14)
    for n in (3, 6, 20):
        A = random_generator(n, rng)
        pi = stationary_distribution(A)
        assert np.abs(A @ pi).max() < 1e-9 and pi.min() >= 0
        assert pi.sum() == pytest.approx(1.0)


def test_stationary_reducible_raises():
    A = np.zeros((4, 4))
    A[:2, :2] = [[-1.0, 1.0], [1.0, -1.0]]
    A[2:, 2:] = [[-2.0, 3.0], [2.0, -3.0]]
    with pytest.raises(ModelError):
        stationary_distribution(A)


def test_mh_fixed_mode_always_accepts(rng):
    traj = Trajectory(0, [1.0], [1], (0.0, 2.0))
    mode = InitialDistMode.fixed([0.5, 0.5])
    A = np.array([[-1.0, 1.0], [1.0, -1.0]])
    assert all(mh_rate_update(A, traj, RatePrior(), mode, rng)[1] for _ in range(200))


def test_mh_ratio_at_least_one_accepts():
    traj = Trajectory(1, [], [], (0.0, 1.0))

    class Rigged:
        def __init__(self):
            self.inner = np.random.default_rng(0)

        def gamma(self, shape, scale=1.0):
            if np.size(shape) == 1:
                return np.ones(1)
            return np.array([5.0, 0.1])  # proposal puts mass 50/51 on state 1

        def random(self, *args):
            if args:
                return self.inner.random(*args)
            raise AssertionError("no uniform should be drawn when the ratio is >= 1")

    A = np.array([[-1.0, 1.0], [1.0, -1.0]])
    A_new, ok = mh_rate_update(A, traj, RatePrior(), InitialDistMode.stationary(), Rigged())
    assert ok and stationary_distribution(A_new)[1] > 0.5


def test_mode_validation():
    with pytest.raises(ModelError):
        InitialDistMode("fixed")
    with pytest.raises(ModelError):
        InitialDistMode("stationary", [1.0])
    with pytest.raises(ModelError):
        InitialDistMode("other")


def test_prior_reproduction_without_data():
    prior = RatePrior(2.0, 1.5, 1.0)
    cfg = GibbsConfig(omega_multiplier=2.0, n_burnin=50, n_samples=4000, rng_seed=7)
    chain = full_bayes_chain(NoObservations(3), prior, InitialDistMode.fixed([1 / 3] * 3),
                             cfg, 3, (0.0, 2.0))
    exits = np.array([-np.diag(s.A) for s in chain])
    for s in range(3):
        x = exits[:, s]
        thin = max(1, int(np.ceil(x.size / effective_sample_size(x))))
        p = stats.kstest(x[::thin], stats.gamma(2.0, scale=1 / 1.5).cdf).pvalue
        assert p > 0.001


def test_geweke_successive_conditionals():
    # alternate data | path and (path, A) | data: the marginal of A stays at the prior
    rng = np.random.default_rng(11)
    prior = RatePrior(2.0, 2.0, 1.0)
    pi0 = np.full(2, 0.5)
    times = np.array([0.5, 1.5])
    A = sample_rate_posterior(empty_stats(2), prior, rng)
    traj = Trajectory.constant(0, (0.0, 2.0))
    exits = []
    for _ in range(6000):
        flip = rng.random(times.size) < 0.2
        values = np.where(flip, 1 - traj.state_at(times), traj.state_at(times))
        obs = DiscreteObservations.symmetric_noise(times, values, 2, 0.2)
        traj = gibbs_kernel(traj, A, pi0, obs, dominating_rate(A, 2.0), rng)
        A = sample_rate_posterior(sufficient_stats(traj, 2), prior, rng)
        exits.append(-A[0, 0])
    x = np.array(exits[500:])
    assert abs(x.mean() - 1.0) < 3 * batch_means_se(x)


def _two_state_posterior_mean(obs_times, values, error, prior, grid=600, upper=10.0):
    """Posterior mean of A[0, 1] by 2-D quadrature in stationary mode."""
    h = upper / grid
    a, b = np.meshgrid((np.arange(grid) + 0.5) * h, (np.arange(grid) + 0.5) * h,
                       indexing="ij")  # a = rate 0->1, b = rate 1->0
    r = a + b
    pi = np.stack([b / r, a / r])
    log_prior = stats.gamma(prior.alpha1, scale=1 / prior.alpha2).logpdf
    log_w = log_prior(a) + log_prior(b)
    v = pi.copy()
    t_prev = 0.0
    for t, y in zip(obs_times, values):
        e = np.exp(-r * (t - t_prev))
        tot = v[0] + v[1]
        v = pi * tot + e * (v - pi * tot)
        lik = np.where(np.arange(2) == y, 1 - error, error)[:, None, None]
        v = v * lik
        t_prev = t
    w = np.exp(log_w - log_w.max()) * (v[0] + v[1])
    return float((b * w).sum() / w.sum())


def test_stationary_mode_against_quadrature():
    times = np.array([0.5, 1.5, 2.5])
    values = np.array([0, 1, 1])
    prior = RatePrior(2.0, 2.0, 1.0)
    ref = _two_state_posterior_mean(times, values, 0.2, prior)
    obs = DiscreteObservations.symmetric_noise(times, values, 2, 0.2)
    cfg = GibbsConfig(omega_multiplier=2.0, n_burnin=500, n_samples=30_000, rng_seed=3)
    samples = list(full_bayes_chain(obs, prior, InitialDistMode.stationary(), cfg, 2,
                                    (0.0, 3.0)))
    x = np.array([s.A[0, 1] for s in samples])
    acc = np.mean([s.accepted for s in samples])
    assert 0.2 < acc < 1.0
    assert abs(x.mean() - ref) < 3 * batch_means_se(x)


def test_chain_determinism_and_generators():
    obs = DiscreteObservations.exact([0.0, 1.0], [0, 2], 3)
    cfg = GibbsConfig(omega_multiplier=2.0, n_burnin=5, n_samples=30, rng_seed=99)

    def run():
        return list(full_bayes_chain(obs, RatePrior(), InitialDistMode.stationary(), cfg, 3,
                                     (0.0, 1.0), A_init=-np.eye(3) + np.roll(np.eye(3), 1, 0)))

    a, b = run(), run()
    for x, y in zip(a, b):
        assert np.array_equal(x.A, y.A)
        as_generator(x.A)


def test_posterior_csv_columns():
    A = np.array([[-1.0, 2.0], [1.0, -2.0]])
    st = SufficientStats(np.array([0.25, 0.75]), np.array([[0, 1], [2, 0]]))

    class S:
        pass

    smp = S()
    smp.A, smp.stats, smp.accepted = A, st, True
    text = write_posterior_csv([smp], 2, io.StringIO())
    head, row = text.strip().split("\n")
    assert head == "a_0_1,a_1_0,dwell_0,dwell_1,n_transitions,accepted"
    assert row == "2,1,0.25,0.75,3,1"
    assert np.array_equal(off_diagonal(A), [2.0, 1.0])
