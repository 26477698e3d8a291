import math
import warnings

import numpy as np
import pytest
from scipy import stats
from scipy.optimize import minimize

from hankelgp.basis import Hilbert, Polynomial
from hankelgp.exceptions import FactorizationError, UnsupportedConfigurationError
from hankelgp.gp import (
    Hyperparams,
    Posterior,
    _fd_gradient,
    dense_gp_posterior,
    dense_neg_log_likelihood,
    kernel_approximation,
    neg_log_marginal_likelihood,
    nlpd,
    optimize_hyperparameters,
    posterior,
    se_kernel,
    spectral_weights,
)
from hankelgp.precision import (
    Dataset,
    DenseSummary,
    accumulate_stats,
    accumulate_stats_naive,
    empty_summary,
)


def toy_data(rng, n=40, hp=Hyperparams(0.5, 1.0, 0.1), lo=-1.0, hi=1.0):
    X = rng.uniform(lo, hi, size=(n, 1))
    K = se_kernel(X, X, hp) + hp.noise_variance * np.eye(n)
    y = np.linalg.cholesky(K) @ rng.standard_normal(n)
    return Dataset(X, y)


def test_hyperparams_validation_and_logs():
    hp = Hyperparams(0.5, 2.0, 0.01)
    back = Hyperparams.from_log(hp.to_log())
    np.testing.assert_allclose(back.to_log(), hp.to_log(), rtol=1e-15)
    assert back.lengthscale == pytest.approx(0.5)
    for bad in [(0.0, 1.0, 1.0), (1.0, -1.0, 1.0), (1.0, 1.0, np.nan)]:
        with pytest.raises(ValueError):
            Hyperparams(*bad)


def test_spectral_weight_ratio():
    L = 1.3
    lam = spectral_weights(Hyperparams(1.0, 1.0, 1.0), Hilbert(4, L))
    w1, w2 = math.pi / (2 * L), 2 * math.pi / (2 * L)
    assert lam[0] / lam[1] == pytest.approx(math.exp((w2**2 - w1**2) / 2), rel=1e-13)


def test_spectral_weight_value():
    lam = spectral_weights(Hyperparams(1.0, 1.0, 1.0), Hilbert(1, 1.0))
    assert lam[0] == pytest.approx(math.sqrt(2 * math.pi) * math.exp(-math.pi**2 / 8), rel=1e-14)
    assert lam[0] == pytest.approx(0.7299625723324938, rel=1e-12)


def test_spectral_weights_2d_order_and_positivity():
    fam = Hilbert((3, 4), (1.0, 2.0))
    hp = Hyperparams(0.7, 1.5, 0.1)
    lam = spectral_weights(hp, fam).reshape(3, 4)
    i, j = np.meshgrid(np.arange(1, 4), np.arange(1, 5), indexing="ij")
    w_sq = (math.pi * i / 2.0) ** 2 + (math.pi * j / 4.0) ** 2
    expected = 1.5 * 2 * math.pi * 0.7**2 * np.exp(-0.5 * 0.7**2 * w_sq)
    np.testing.assert_allclose(lam, expected, rtol=1e-13)
    assert np.all(lam > 0)
    order = np.argsort(w_sq.reshape(-1))
    assert np.all(np.diff(lam.reshape(-1)[order]) <= 0)


def test_spectral_weights_reject_other_families():
    with pytest.raises(UnsupportedConfigurationError):
        spectral_weights(Hyperparams(1, 1, 1), Polynomial(3))


@pytest.mark.parametrize("ell", [0.25, 0.3, 0.5])
def test_kernel_convergence_non_increasing(ell):
    # sup error over |x|, |x'| <= L/2 settles at the domain-truncation floor once the
    # spectral tail is negligible, so the trend is non-increasing rather than strict
    L = 1.0
    hp = Hyperparams(ell, 1.0, 0.1)
    x = np.linspace(-L / 2, L / 2, 41)[:, None]
    errors = [np.abs(kernel_approximation(x, x, hp, Hilbert(m, L)) - se_kernel(x, x, hp)).max()
              for m in (16, 32, 64)]
    assert errors[0] >= errors[1] - 1e-12 and errors[1] >= errors[2] - 1e-12
    # the floor is the first reflected image of the kernel at distance L
    assert errors[2] <= 1.01 * math.exp(-(L**2) / (2 * ell**2))


def test_kernel_convergence_strict_when_tail_dominates():
    L, hp = 1.0, Hyperparams(0.15, 1.0, 0.1)
    x = np.linspace(-L / 2, L / 2, 41)[:, None]
    errors = [np.abs(kernel_approximation(x, x, hp, Hilbert(m, L)) - se_kernel(x, x, hp)).max()
              for m in (8, 16, 32)]
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 1e-9


def test_prior_posterior_n0(rng):
    fam = Hilbert(12, 2.0)
    hp = Hyperparams(0.6, 1.3, 0.2)
    Xs = rng.uniform(-1.5, 1.5, size=(15, 1))
    post = posterior(empty_summary(fam), hp, fam, Xs)
    np.testing.assert_allclose(post.mean, 0.0, atol=1e-15)
    prior = np.diag(kernel_approximation(Xs, Xs, hp, fam))
    np.testing.assert_allclose(post.variance, prior, rtol=1e-12)


def test_posterior_variance_not_above_prior(rng):
    fam = Hilbert((6, 5), (1.5, 1.5))
    hp = Hyperparams(0.5, 1.0, 0.05)
    X = rng.uniform(-1, 1, size=(60, 2))
    s = accumulate_stats(fam, Dataset(X, rng.standard_normal(60)))
    Xs = rng.uniform(-1.4, 1.4, size=(50, 2))
    post = posterior(s, hp, fam, Xs, full_cov=True)
    prior = np.diag(kernel_approximation(Xs, Xs, hp, fam))
    assert np.all(post.variance >= 0)
    assert np.all(post.variance <= prior * (1 + 1e-12))
    np.testing.assert_allclose(post.covariance, post.covariance.T)
    np.testing.assert_allclose(np.diag(post.covariance), post.variance, rtol=1e-10, atol=1e-14)
    assert np.linalg.eigvalsh(post.covariance).min() >= -1e-10


def test_gamma_and_naive_paths_agree(rng):
    fam = Hilbert((7, 6), (1.2, 1.2))
    hp = Hyperparams(0.4, 2.0, 0.05)
    data = Dataset(rng.uniform(-1, 1, size=(80, 2)), rng.standard_normal(80))
    g = accumulate_stats(fam, data)
    d = accumulate_stats_naive(fam, data)
    Xs = rng.uniform(-1, 1, size=(30, 2))
    pg, pd = posterior(g, hp, fam, Xs), posterior(d, hp, fam, Xs)
    np.testing.assert_allclose(pg.mean, pd.mean, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(pg.variance, pd.variance, rtol=1e-10, atol=1e-14)
    assert neg_log_marginal_likelihood(g, hp, fam) == pytest.approx(
        neg_log_marginal_likelihood(d, hp, fam), rel=1e-10)


def test_posterior_matches_dense_gp(rng):
    hp = Hyperparams(0.5, 1.0, 0.1)
    data = toy_data(rng, hp=hp)
    fam = Hilbert(64, 2.0)
    Xs = np.linspace(-1, 1, 101)[:, None]
    a = posterior(accumulate_stats(fam, data), hp, fam, Xs)
    b = dense_gp_posterior(data, hp, Xs)
    assert np.sqrt(np.mean((a.mean - b.mean) ** 2)) <= 1e-3
    assert np.sqrt(np.mean((a.variance - b.variance) ** 2)) <= 5e-3


def test_dense_gp_scalar_case():
    hp = Hyperparams(0.8, 1.7, 0.3)
    x, c = 0.2, 1.9
    xs = np.array([[-0.4], [0.2], [1.0]])
    post = dense_gp_posterior(Dataset([[x]], [c]), hp, xs)
    k = hp.signal_variance * np.exp(-0.5 * (xs[:, 0] - x) ** 2 / hp.lengthscale**2)
    np.testing.assert_allclose(post.mean, k * c / (hp.signal_variance + hp.noise_variance))
    np.testing.assert_allclose(post.variance,
                               hp.signal_variance - k**2 / (hp.signal_variance + hp.noise_variance))


def test_dense_gp_interpolates():
    hp = Hyperparams(0.5, 1.0, 1e-12)
    X = np.array([[-0.5], [0.1], [0.7]])
    y = np.array([0.3, -1.2, 0.8])
    post = dense_gp_posterior(Dataset(X, y), hp, X)
    np.testing.assert_allclose(post.mean, y, atol=1e-6)


@pytest.mark.parametrize("seed", range(6))
def test_nll_matches_dense_gaussian(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 31))
    fam = Hilbert(int(rng.integers(4, 40)), 1.5)
    hp = Hyperparams(*np.exp(rng.uniform(-1.5, 0.5, size=3)))
    data = Dataset(rng.uniform(-1, 1, size=(n, 1)), rng.standard_normal(n))
    Phi = fam.regressor_matrix(data.X)
    cov = (Phi * spectral_weights(hp, fam)) @ Phi.T + hp.noise_variance * np.eye(n)
    oracle = -stats.multivariate_normal(np.zeros(n), cov).logpdf(data.y)
    assert abs(neg_log_marginal_likelihood(accumulate_stats(fam, data), hp, fam) - oracle) <= 1e-8
    assert abs(dense_neg_log_likelihood(data, hp, fam) - oracle) <= 1e-8


def test_nll_noise_doubling_with_zero_targets(rng):
    fam = Hilbert(10, 1.0)
    data = Dataset(rng.uniform(-1, 1, size=(20, 1)), np.zeros(20))
    s = accumulate_stats(fam, data)
    hp1 = Hyperparams(0.4, 1.0, 0.05)
    hp2 = Hyperparams(0.4, 1.0, 0.10)
    diff = neg_log_marginal_likelihood(s, hp2, fam) - neg_log_marginal_likelihood(s, hp1, fam)
    oracle = dense_neg_log_likelihood(data, hp2, fam) - dense_neg_log_likelihood(data, hp1, fam)
    assert diff == pytest.approx(oracle, abs=1e-9)
    # with y = 0 only the log-determinant moves: bounded by N/2 log 2
    assert 0 < diff <= 0.5 * 20 * math.log(2) + 1e-12


def test_nll_needs_data():
    fam = Hilbert(3, 1.0)
    with pytest.raises(ValueError):
        neg_log_marginal_likelihood(empty_summary(fam), Hyperparams(1, 1, 1), fam)


def test_fd_gradient_step_consistency(rng):
    fam = Hilbert(32, 2.0)
    data = toy_data(rng, n=100)
    s = accumulate_stats(fam, data)
    f = lambda t: neg_log_marginal_likelihood(s, Hyperparams.from_log(t), fam)
    theta = Hyperparams(0.7, 1.5, 0.2).to_log()
    g1 = _fd_gradient(f, theta, 1e-4)
    g2 = _fd_gradient(f, theta, 1e-5)
    big = np.abs(g1) > 1e-6
    assert big.any()
    np.testing.assert_allclose(g1[big], g2[big], rtol=1e-2)


def test_optimizer_near_fixed_point(rng):
    fam = Hilbert(64, 2.0)
    s = accumulate_stats(fam, toy_data(rng, n=200))
    f = lambda t: neg_log_marginal_likelihood(s, Hyperparams.from_log(t), fam)
    opt = minimize(f, Hyperparams(0.5, 1.0, 0.1).to_log(), method="Nelder-Mead",
                   options=dict(xatol=1e-10, fatol=1e-12, maxiter=20000))
    assert np.abs(_fd_gradient(f, opt.x, 1e-4)).max() < 1e-3
    res = optimize_hyperparameters(s, fam, Hyperparams.from_log(opt.x), iters=10)
    # Adam's normalised step keeps the iterate within a few learning rates of the optimum
    assert np.abs(res.params.to_log() - opt.x).max() < 0.1
    assert abs(res.final_nll - opt.fun) < 1e-2 * max(1.0, abs(opt.fun))
    assert len(res.trace) == 11


def test_optimizer_recovers_lengthscale():
    rng = np.random.default_rng(1)
    truth = Hyperparams(0.5, 2.0, 0.01)
    data = toy_data(rng, n=500, hp=truth)
    fam = Hilbert(64, 2.0)
    res = optimize_hyperparameters(accumulate_stats(fam, data), fam, Hyperparams(1.0, 10.0, 1.0))
    assert res.final_nll <= res.initial_nll
    assert 0.5 / 1.5 <= res.params.lengthscale <= 0.5 * 1.5
    assert len(res.trace) == 101


def test_optimizer_rejects_non_finite_steps(rng):
    # a huge learning rate drives the noise variance to underflow; steps must be rejected
    fam = Hilbert(16, 2.0)
    s = accumulate_stats(fam, toy_data(rng, n=50))
    try:
        res = optimize_hyperparameters(s, fam, Hyperparams(1.0, 1.0, 1.0), iters=5,
                                       learning_rate=1e3)
    except FactorizationError as exc:
        assert "trace" in str(exc)
    else:
        assert np.all(np.isfinite(res.trace))


def test_factorization_error_names_pivot():
    fam = Hilbert(3, 1.0)
    bad = DenseSummary(-1e6 * np.eye(3), np.zeros(3), 0.0, 1)
    with pytest.raises(FactorizationError, match="smallest pivot"):
        posterior(bad, Hyperparams(1, 1, 1e-3), fam, [[0.0]])


def test_nlpd_examples():
    post = Posterior(np.array([1.0, -2.0]), np.array([0.0, 0.0]), 1 / (2 * math.pi))
    assert nlpd(post, [1.0, -2.0]) == pytest.approx(0.0, abs=1e-15)
    post = Posterior(np.array([0.5]), np.array([0.75]), 0.25)
    assert nlpd(post, [0.5]) == pytest.approx(0.5 * math.log(2 * math.pi))
    assert nlpd(post, [0.5]) == pytest.approx(0.9189385332)


def test_nlpd_matches_scipy(rng):
    mean, var = rng.standard_normal(20), rng.uniform(0.1, 2, 20)
    y = rng.standard_normal(20)
    post = Posterior(mean, var, 0.3)
    oracle = -np.mean(stats.norm(mean, np.sqrt(var + 0.3)).logpdf(y))
    assert nlpd(post, y) == pytest.approx(oracle, rel=1e-12)


def test_nlpd_rejects_bad_input():
    post = Posterior(np.zeros(2), np.ones(2), 0.1)
    with pytest.raises(ValueError):
        nlpd(post, [0.0])
    with pytest.raises(ValueError):
        nlpd(post, [0.0, np.nan])


def test_posterior_warns_outside_domain():
    fam = Hilbert(4, 1.0)
    with pytest.warns(Warning):
        posterior(empty_summary(fam), Hyperparams(1, 1, 1), fam, [[2.0]])
