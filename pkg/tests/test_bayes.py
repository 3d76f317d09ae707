import math

import numpy as np
import pytest
from scipy import stats

from serorecency.bayes import (
    ChainState,
    ModelSpec,
    full_conditional_mu,
    full_conditional_sigma_beta,
    full_conditional_sigma_eps,
    iw_prior_correlations,
    log_inverse_gamma,
    log_inverse_wishart,
    loglik_individual,
    loglik_individual_bivariate,
    loglik_individual_univariate,
    logprior,
    sample_inverse_gamma,
    sample_inverse_wishart,
)
from serorecency.errors import DomainError, InvalidArgumentError, NumericalSingularityError
from serorecency.growth import BivariateSpec, GrowthModelSpec, eval_trajectory

LIN = GrowthModelSpec("linear")
NL3 = GrowthModelSpec("nonlinear3")
VIR = GrowthModelSpec("viral")


def test_zero_residual_unit_variance():
    y = eval_trajectory(LIN, (5, 2), 0.3, (0.0,))
    assert loglik_individual_univariate(y, (0.0,), 0.3, (5, 2), 1.0, LIN) == pytest.approx(-0.918939, abs=1e-6)


def test_doubling_residual():
    r, s2 = 0.37, 0.2
    t = np.array([0.5])
    base = eval_trajectory(LIN, (1, 1), 0.0, t)
    a = loglik_individual_univariate(base + r, t, 0.0, (1, 1), s2, LIN)
    b = loglik_individual_univariate(base + 2 * r, t, 0.0, (1, 1), s2, LIN)
    assert a - b == pytest.approx(3 * r * r / (2 * s2), rel=1e-12)


def test_univariate_matches_pointwise_product(rng):
    t = np.sort(rng.uniform(0, 2, 7))
    beta = (1.5, -1.2, 0.4)
    y = eval_trajectory(NL3, beta, 0.2, t) + rng.normal(0, 0.1, 7)
    got = loglik_individual_univariate(y, t, 0.2, beta, 0.013, NL3)
    mean = eval_trajectory(NL3, beta, 0.2, t)
    want = sum(stats.norm.logpdf(yi, mi, math.sqrt(0.013)) for yi, mi in zip(y, mean))
    assert got == pytest.approx(want, rel=1e-10)


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_nonpositive_variance(bad):
    with pytest.raises(DomainError):
        loglik_individual_univariate([1.0], [0.0], 0.0, (1, 1), bad, LIN)


def test_bivariate_is_sum_and_matches_block_mvn(rng):
    spec = BivariateSpec(NL3, VIR)
    t = np.array([0.0, 0.25, 0.5])
    b1, b2 = (1.5, -1.5, 0.8), (3.0, 2.0)
    y1 = eval_trajectory(NL3, b1, 0.4, t) + rng.normal(0, 0.05, 3)
    y2 = eval_trajectory(VIR, b2, 0.4, t) + rng.normal(0, 0.2, 3)
    got = loglik_individual_bivariate(y1, y2, t, 0.4, b1, b2, (0.0025, 0.04), spec)
    parts = loglik_individual_univariate(y1, t, 0.4, b1, 0.0025, NL3) + loglik_individual_univariate(
        y2, t, 0.4, b2, 0.04, VIR
    )
    assert got == pytest.approx(parts, abs=1e-12)
    mean = np.concatenate([eval_trajectory(NL3, b1, 0.4, t), eval_trajectory(VIR, b2, 0.4, t)])
    cov = np.diag([0.0025] * 3 + [0.04] * 3)
    assert got == pytest.approx(stats.multivariate_normal(mean, cov).logpdf(np.concatenate([y1, y2])), rel=1e-10)
    assert loglik_individual_bivariate(y1, y2, t, 0.4, b1, b2, np.diag([0.0025, 0.04]), spec) == got


def test_bivariate_zero_residuals():
    spec = BivariateSpec(LIN, VIR)
    y1 = eval_trajectory(LIN, (5, 2), 0.0, (0.0,))
    y2 = eval_trajectory(VIR, (3, 2), 0.0, (0.0,))
    v = loglik_individual_bivariate(y1, y2, (0.0,), 0.0, (5, 2), (3, 2), (1.0, 1.0), spec)
    assert v == pytest.approx(2 * -0.918939, abs=1e-6)


def test_bivariate_rejects_correlated_errors():
    spec = BivariateSpec(LIN, VIR)
    with pytest.raises(InvalidArgumentError):
        loglik_individual_bivariate([5], [6], [0], 0, (5, 2), (3, 2), [[1, 0.1], [0.1, 1]], spec)


def _state(model, n=4, tau=0.5, seed=0):
    r = np.random.default_rng(seed)
    p = model.n_params
    mu = r.normal(size=p)
    beta = mu + 0.1 * r.normal(size=(n, p))
    beta[:, model.fixed_index] = mu[model.fixed_index]
    return ChainState(beta, mu, np.eye(model.n_random) * 0.5, np.full(model.n_biomarkers, 0.02), tau)


def test_flat_tau_prior_and_support():
    m = ModelSpec((NL3,))
    a, b = _state(m, tau=0.5), _state(m, tau=0.2)
    assert logprior(a, m) == logprior(b, m)
    assert logprior(_state(m, tau=1.2), m) == -math.inf
    assert logprior(_state(m, tau=-0.01), m) == -math.inf


def test_inverse_gamma_two_ways():
    a, b, x = 2.0, 0.01, 0.01
    direct = a * math.log(b) - math.lgamma(a) - (a + 1) * math.log(x) - b / x
    assert log_inverse_gamma(x, a, b) == pytest.approx(direct, rel=1e-10)
    assert log_inverse_gamma(x, a, b) == pytest.approx(stats.invgamma(a, scale=b).logpdf(x), rel=1e-10)


def test_inverse_wishart_at_identity():
    # -(3/2)d log 2 - log Gamma_2(3/2) - 1 with Gamma_2(3/2) = pi/2
    want = -2 * math.log(2) - math.log(math.pi) - 1
    assert log_inverse_wishart(np.eye(2), 3.0, np.eye(2)) == pytest.approx(want, abs=1e-12)
    assert want == pytest.approx(-3.531024, abs=1e-6)
    s = np.array([[0.7, 0.2], [0.2, 0.4]])
    assert log_inverse_wishart(s, 5.0, np.eye(2) * 0.3) == pytest.approx(
        stats.invwishart(5.0, np.eye(2) * 0.3).logpdf(s), rel=1e-10
    )


def test_mu_conditional_no_data():
    mean, cov = full_conditional_mu(np.empty((0, 2)), np.eye(2))
    np.testing.assert_array_equal(mean, 0)
    np.testing.assert_array_equal(cov, 1e6 * np.eye(2))


def test_mu_conditional_flat_limit():
    beta = np.tile([1.0, 2.0], (100, 1))
    mean, _ = full_conditional_mu(beta, np.eye(2))
    np.testing.assert_allclose(mean, (1, 2), rtol=1e-4)


def test_mu_conditional_singular():
    with pytest.raises(NumericalSingularityError):
        full_conditional_mu(np.ones((3, 2)), np.zeros((2, 2)))


def test_mu_conditional_matches_grid(rng):
    sig = np.array([[0.3, 0.1], [0.1, 0.2]])
    beta = rng.multivariate_normal([1.0, -0.5], sig, size=12)
    mean, cov = full_conditional_mu(beta, sig, prior_var=4.0)

    prec = np.linalg.inv(sig)

    def logc(m):
        # conditional log density up to a constant, vectorised over leading axes of m
        d = beta[None, :, :] - np.reshape(m, (-1, 1, 2))
        quad = np.einsum("kni,ij,knj->k", d, prec, d)
        out = -0.5 * quad - 0.5 * (np.reshape(m, (-1, 2)) ** 2).sum(axis=1) / 4.0
        return out if np.ndim(m) > 1 else float(out[0])

    g0 = np.linspace(mean[0] - 0.5, mean[0] + 0.5, 201)
    g1 = np.linspace(mean[1] - 0.5, mean[1] + 0.5, 201)
    mesh = np.stack(np.meshgrid(g0, g1, indexing="ij"), axis=-1).reshape(-1, 2)
    vals = logc(mesh).reshape(201, 201)
    i, j = np.unravel_index(np.argmax(vals), vals.shape)
    assert abs(g0[i] - mean[0]) <= g0[1] - g0[0]
    assert abs(g1[j] - mean[1]) <= g1[1] - g1[0]
    h = 1e-3
    hess = np.empty((2, 2))
    for a in range(2):
        for b in range(2):
            ea, eb = np.eye(2)[a] * h, np.eye(2)[b] * h
            hess[a, b] = (logc(mean + ea + eb) - logc(mean + ea - eb) - logc(mean - ea + eb) + logc(mean - ea - eb)) / (4 * h * h)
    np.testing.assert_allclose(-hess, np.linalg.inv(cov), rtol=1e-4)


def test_sigma_beta_conditional():
    df, scale = full_conditional_sigma_beta(np.empty((0, 2)), np.zeros(2), 3.0, np.eye(2))
    assert df == 3.0 and np.array_equal(scale, np.eye(2))
    beta = np.tile([0.3, -0.2], (7, 1))
    df, scale = full_conditional_sigma_beta(beta, [0.3, -0.2], 3.0, np.eye(2))
    assert df == 10.0 and np.array_equal(scale, np.eye(2))


def test_sigma_beta_iw_moment(rng):
    beta = rng.normal(size=(20, 2))
    df, scale = full_conditional_sigma_beta(beta, np.zeros(2), 3.0, np.eye(2))
    draws = np.array([sample_inverse_wishart(df, scale, rng) for _ in range(20000)])
    target = scale / (df - 2 - 1)
    se = draws.std(axis=0) / math.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - target) < 4 * se + 1e-12)


def test_sigma_eps_conditional(rng):
    assert full_conditional_sigma_eps(np.zeros(10), 2.0, 0.01) == (7.0, 0.01)
    assert full_conditional_sigma_eps([1.0, 1.0, 0.0, 0.0], 2.0, 0.01) == (4.0, 1.01)
    a, b = full_conditional_sigma_eps(rng.normal(size=30), 2.0, 0.01)
    draws = np.array([sample_inverse_gamma(a, b, rng) for _ in range(20000)])
    assert abs(draws.mean() - b / (a - 1)) < 4 * draws.std() / math.sqrt(len(draws))


def test_iw_prior_correlations_uniform(rng):
    c = iw_prior_correlations(2, 10_000, rng)
    assert stats.kstest(c, stats.uniform(-1, 2).cdf).pvalue > 0.01
    c3 = iw_prior_correlations(3, 10_000, rng)
    assert stats.kstest(c3, stats.uniform(-1, 2).cdf).pvalue > 0.01


def _log_post(state, model, y, t, taus):
    lp = logprior(state, model)
    for i in range(len(y)):
        tau = state.tau_new if i == len(y) - 1 else taus[i]
        lp += loglik_individual(y[i], t, tau, state.beta[i], state.sigma2_eps, model)
    return lp


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_factorization_per_block(seed):
    model = ModelSpec((NL3, LIN))
    r = np.random.default_rng(seed)
    t = np.linspace(0, 1, 4)
    n = 5
    base = _state(model, n=n, seed=seed)
    y = [
        np.stack(
            [eval_trajectory(NL3, base.beta[i, :3], 0.3, t), eval_trajectory(LIN, base.beta[i, 3:], 0.3, t)]
        )
        + 0.1 * r.normal(size=(2, 4))
        for i in range(n)
    ]
    taus = r.uniform(size=n)
    ridx = model.random_index
    # mu (random coordinates): conditional is normal
    mean, cov = full_conditional_mu(base.beta[:, ridx], base.sigma_beta, model.mu_prior_var)
    a, b = base.copy(), base.copy()
    a.mu[ridx] += r.normal(size=ridx.size) * 0.1
    b.mu[ridx] -= r.normal(size=ridx.size) * 0.1
    dpost = _log_post(a, model, y, t, taus) - _log_post(b, model, y, t, taus)
    dcond = stats.multivariate_normal(mean, cov).logpdf(a.mu[ridx]) - stats.multivariate_normal(mean, cov).logpdf(b.mu[ridx])
    assert dpost == pytest.approx(dcond, abs=1e-7)
    # sigma_beta: inverse-Wishart conditional
    df, scale = full_conditional_sigma_beta(base.beta[:, ridx], base.mu[ridx], model.df, model.scale_matrix)
    a, b = base.copy(), base.copy()
    a.sigma_beta = sample_inverse_wishart(df, scale, r)
    b.sigma_beta = sample_inverse_wishart(df, scale, r)
    dpost = _log_post(a, model, y, t, taus) - _log_post(b, model, y, t, taus)
    iw = stats.invwishart(df, scale)
    assert dpost == pytest.approx(iw.logpdf(a.sigma_beta) - iw.logpdf(b.sigma_beta), abs=1e-7)
    # sigma_eps for biomarker 0: inverse-gamma conditional
    resid = np.concatenate(
        [y[i][0] - eval_trajectory(NL3, base.beta[i, :3], base.tau_new if i == n - 1 else taus[i], t) for i in range(n)]
    )
    sa, sb = full_conditional_sigma_eps(resid, model.eps_shape, model.eps_scale)
    a, b = base.copy(), base.copy()
    a.sigma2_eps[0], b.sigma2_eps[0] = 0.015, 0.03
    dpost = _log_post(a, model, y, t, taus) - _log_post(b, model, y, t, taus)
    ig = stats.invgamma(sa, scale=sb)
    assert dpost == pytest.approx(ig.logpdf(0.015) - ig.logpdf(0.03), abs=1e-7)


def test_model_spec_validation():
    with pytest.raises(InvalidArgumentError):
        ModelSpec(())
    with pytest.raises(InvalidArgumentError):
        ModelSpec((LIN,), tau_lo=1.0, tau_hi=0.5)
    m = ModelSpec((GrowthModelSpec("nonlinear3", (True, False, False)), VIR))
    assert m.n_random == 4 and m.df == 5.0 and list(m.fixed_index) == [0]
