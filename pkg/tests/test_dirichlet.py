"""Dirichlet algebra: worked values, Monte-Carlo and grid-density oracles, properties."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats
from scipy.special import gammaln

from gedl import dirichlet
from gedl.checks import _grid_posterior_error, check_conjugacy, check_dirichlet_expectations, mc_draws
from gedl.dirichlet import DirichletParams

alphas = st.integers(2, 10).flatmap(lambda K: arrays(float, K, elements=st.floats(0.05, 50.0)))


# --- worked values ----------------------------------------------------------


def test_mean_values():
    np.testing.assert_allclose(dirichlet.mean([1, 1, 1]), [1 / 3] * 3, atol=1e-15)
    np.testing.assert_allclose(dirichlet.mean([3, 7]), [0.3, 0.7], atol=1e-15)
    np.testing.assert_allclose(dirichlet.mean([2, 1]), [2 / 3, 1 / 3], atol=1e-15)


def test_variance_values():
    assert dirichlet.variance([1, 1], 0) == pytest.approx(1 / 12, abs=1e-15)
    assert dirichlet.variance([1000, 1000], 0) == pytest.approx(1.249e-4, rel=1e-3)
    v = dirichlet.variance([4, 4, 4, 4])
    assert np.all(v == v[0]) and np.all(v > 0)


def test_expected_log_values():
    assert dirichlet.expected_log([2, 1], 0) == pytest.approx(-0.5, abs=1e-12)
    assert dirichlet.expected_log([1, 1], 0) == pytest.approx(-1.0, abs=1e-12)


def test_expected_pi_log_pi_values():
    assert dirichlet.expected_pi_log_pi([1, 1], 0) == pytest.approx(-0.25, abs=1e-12)
    assert dirichlet.expected_pi_log_pi([2, 1], 0) == pytest.approx(-2 / 9, abs=1e-12)


def test_kl_values():
    assert dirichlet.kl_divergence([1, 1, 1], [1, 1, 1]) == pytest.approx(0.0, abs=1e-15)
    assert dirichlet.kl_divergence([2, 1], [1, 1]) == pytest.approx(math.log(2) - 0.5, abs=1e-12)


def test_kl_batched_matches_loop():
    rng = np.random.default_rng(0)
    q, p = rng.uniform(0.5, 5, (6, 4)), rng.uniform(0.5, 5, (6, 4))
    np.testing.assert_allclose(dirichlet.kl_divergence(q, p), [dirichlet.kl_divergence(a, b) for a, b in zip(q, p)])


@pytest.mark.parametrize("k", [-1, 2, 5])
@pytest.mark.parametrize("fn", [dirichlet.variance, dirichlet.expected_log, dirichlet.expected_pi_log_pi])
def test_index_out_of_range(fn, k):
    with pytest.raises(IndexError):
        fn([1.0, 2.0], k)


@pytest.mark.parametrize("bad", [[1.0], [1.0, 0.0], [1.0, -2.0], [1.0, np.inf], [np.nan, 1.0]])
def test_invalid_params(bad):
    with pytest.raises(ValueError):
        DirichletParams(np.array(bad))


def test_kl_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        dirichlet.kl_divergence([1, 1], [1, 1, 1])


def test_params_immutable_and_hashable():
    d = DirichletParams(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        d.alpha[0] = 5.0
    assert d == DirichletParams(np.array([1.0, 2.0]))
    assert len({d, DirichletParams(np.array([1.0, 2.0]))}) == 1
    assert d.strength() == 3.0 and d.K == 2
    assert d.kl_divergence(d) == pytest.approx(0.0, abs=1e-15)


# --- updates ----------------------------------------------------------------


def test_conjugate_update():
    np.testing.assert_array_equal(dirichlet.conjugate_update([1, 2], [3, 0]), [4, 2])
    np.testing.assert_array_equal(dirichlet.conjugate_update([1, 2], [0, 0]), [1, 2])
    a0, n1, n2 = np.array([1.0, 2.0, 0.5]), np.array([1.0, 0, 3]), np.array([0, 2.0, 1])
    np.testing.assert_array_equal(
        dirichlet.conjugate_update(dirichlet.conjugate_update(a0, n1), n2),
        dirichlet.conjugate_update(a0, n1 + n2),
    )


def test_tempered_update():
    np.testing.assert_array_equal(dirichlet.tempered_update([1, 1, 1], [0, 1, 0], 3.0), [1, 4, 1])
    np.testing.assert_array_equal(dirichlet.tempered_update([2, 5], [0, 1], 1.0), dirichlet.conjugate_update([2, 5], [0, 1]))
    np.testing.assert_allclose(dirichlet.tempered_update([2, 2], [1, 0], 0.5), [2.5, 2.0])


def test_tempered_update_grid_example():
    # (2,2), y=(1,0), tau=0.5 -> Dir(2.5, 2) by grid-normalising p(y|pi)^tau p(pi)
    assert _grid_posterior_error([2.0, 2.0], [1.0, 0.0], 0.5) <= 1e-4


@pytest.mark.parametrize("tau", [0.0, -1.0, np.inf, np.nan])
def test_tempered_update_rejects_tau(tau):
    with pytest.raises(ValueError):
        dirichlet.tempered_update([1, 1], [1, 0], tau)


def test_update_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        dirichlet.conjugate_update([1, 1], [1, 0, 0])
    with pytest.raises(ValueError):
        dirichlet.conjugate_update([1, 1], [-1, 0])


def test_conjugacy_grid_suite():
    res = check_conjugacy()
    assert res.passed, res.line()
    assert res.seconds < 10.0


def test_log_density_matches_scipy():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = rng.uniform(0.3, 8.0, int(rng.integers(2, 7)))
        x = rng.dirichlet(a, 5)
        x = np.clip(x, 1e-12, None)
        x /= x.sum(axis=1, keepdims=True)
        ref = [stats.dirichlet.logpdf(xi, a) for xi in x]
        np.testing.assert_allclose(dirichlet.log_density(a, x), ref, rtol=1e-9, atol=1e-9)


# --- sampling and Monte Carlo ---------------------------------------------------


def test_sample_on_simplex():
    rng = np.random.default_rng(0)
    for a in ([0.05, 0.05, 0.05], [1, 1], [3, 7], [200, 1, 0.5]):
        x = dirichlet.sample(a, rng, 1000)
        assert x.shape == (1000, len(a))
        assert np.all(x >= 0) and np.max(np.abs(x.sum(axis=1) - 1.0)) <= 1e-12
    assert dirichlet.sample([1, 2], rng).shape == (2,)


def test_sample_moments():
    rng = np.random.default_rng(1)
    x = dirichlet.sample([3, 7], rng, 1_000_000)
    np.testing.assert_allclose(x.mean(axis=0), [0.3, 0.7], atol=3e-3)
    y = dirichlet.sample([1, 1], rng, 1_000_000)
    assert abs(y[:, 0].var() - 1 / 12) <= 2e-3


def test_sample_deterministic_for_seed():
    a = [0.5, 2.0, 3.0]
    np.testing.assert_array_equal(
        dirichlet.sample(a, np.random.default_rng(9), 10), dirichlet.sample(a, np.random.default_rng(9), 10)
    )


def test_sample_distribution_ks():
    # K=2: the first coordinate is Beta(a0, a1)
    x = dirichlet.sample([0.3, 2.5], np.random.default_rng(4), 20_000)[:, 0]
    assert stats.kstest(x, stats.beta(0.3, 2.5).cdf).pvalue > 1e-3


def test_worked_values_by_monte_carlo():
    rng = np.random.default_rng(11)
    pi, log_pi, control = mc_draws(np.array([3.0, 7.0]), rng, 1_000_000)
    np.testing.assert_allclose(pi.mean(axis=0), [0.3, 0.7], atol=3e-3)
    pi, log_pi, control = mc_draws(np.array([1.0, 1.0]), rng, 1_000_000)
    assert abs(pi[:, 0].var() - 1 / 12) <= 3e-3
    assert abs((pi[:, 0] * log_pi[:, 0]).mean() + 0.25) <= 3e-3
    assert abs((log_pi[:, 0] - control[:, 0]).mean() + 1.0) <= 5e-3


def _mc_kl(q, p, rng, n=1_000_000):
    _, log_pi, control = mc_draws(q, rng, n)
    # ln q(pi) - ln p(pi) = ln B(p) - ln B(q) + sum_k (q_k - p_k) ln pi_k
    log_ratio_mean = np.sum((q - p) * (log_pi - control).mean(axis=0))
    return _lnB(p) - _lnB(q) + float(log_ratio_mean)


def _lnB(a):
    return float(np.sum(gammaln(a)) - gammaln(np.sum(a)))


def test_kl_worked_value_by_monte_carlo():
    rng = np.random.default_rng(5)
    assert abs(_mc_kl(np.array([2.0, 1.0]), np.array([1.0, 1.0]), rng) - (math.log(2) - 0.5)) <= 5e-3


@pytest.mark.slow
def test_kl_random_pairs_by_monte_carlo():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(100):
        K = int(rng.integers(2, 11))
        q, p = rng.uniform(0.5, 5.0, K), rng.uniform(0.5, 5.0, K)
        worst = max(worst, abs(_mc_kl(q, p, rng) - dirichlet.kl_divergence(q, p)))
    assert worst <= 5e-3


@pytest.mark.slow
def test_expectation_suite():
    res = check_dirichlet_expectations()
    assert res.passed, res.line()
    assert res.seconds < 60.0


# --- properties ---------------------------------------------------------------


@settings(max_examples=300, deadline=None)
@given(alphas)
def test_mean_in_open_simplex(a):
    m = dirichlet.mean(a)
    assert np.all(m > 0) and np.all(m < 1) and abs(m.sum() - 1.0) <= 1e-12


@settings(max_examples=300, deadline=None)
@given(alphas, st.data())
def test_kl_nonnegative_and_identity(q, data):
    p = data.draw(arrays(float, len(q), elements=st.floats(0.05, 50.0)))
    assert dirichlet.kl_divergence(q, p) >= -1e-9
    assert abs(dirichlet.kl_divergence(q, q)) <= 1e-9
    if np.max(np.abs(q - p)) > 1e-3:
        assert dirichlet.kl_divergence(q, p) > 0


@settings(max_examples=200, deadline=None)
@given(alphas)
def test_expectation_signs(a):
    assert np.all(dirichlet.expected_log(a) < 0)
    assert np.all(dirichlet.expected_pi_log_pi(a) < 0)
    assert np.all(dirichlet.variance(a) > 0)
