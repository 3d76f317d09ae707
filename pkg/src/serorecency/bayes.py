"""Log densities and conjugate full conditionals of the mixed-effects model.

Parameter layout: each individual carries a stacked vector ``beta`` of length
``p`` (first biomarker's block, then the second's). Coordinates flagged as
fixed effects are shared by everyone, live in ``mu`` only and are excluded
from the random-effects covariance, which therefore has size ``r x r`` with
``r`` the number of random coordinates.

Priors:

* ``tau_new ~ Uniform(tau_lo, tau_hi)``
* every coordinate of ``mu ~ N(0, mu_prior_var)``
* each error variance ``~ InvGamma(shape=eps_shape, scale=eps_scale)``
* random-effects covariance ``~ InvWishart(df=r + 1, scale=I_r)``
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import multigammaln

from .errors import DomainError, InvalidArgumentError, NumericalSingularityError
from .growth import BivariateSpec, GrowthModelSpec, eval_trajectory

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ModelSpec:
    biomarkers: tuple[GrowthModelSpec, ...]
    unknown_tau_index: int | None = None
    tau_lo: float = 0.0
    tau_hi: float = 1.0
    mu_prior_var: float = 1e6
    eps_shape: float = 2.0
    eps_scale: float = 0.01
    iw_df: float | None = None
    iw_scale: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 1 <= len(self.biomarkers) <= 2:
            raise InvalidArgumentError("model needs one or two biomarkers")
        if not self.tau_hi > self.tau_lo:
            raise InvalidArgumentError("tau prior bounds must satisfy lo < hi")
        if min(self.mu_prior_var, self.eps_shape, self.eps_scale) <= 0:
            raise InvalidArgumentError("prior hyperparameters must be positive")
        if self.iw_df is not None and self.iw_df <= self.n_random - 1:
            raise InvalidArgumentError("inverse-Wishart df must exceed dimension - 1")

    @property
    def n_biomarkers(self) -> int:
        return len(self.biomarkers)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(b.dimension for b in self.biomarkers)

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(int(v) for v in np.concatenate([[0], np.cumsum(self.dims)]))

    @property
    def n_params(self) -> int:
        return sum(self.dims)

    @property
    def fixed_mask(self) -> np.ndarray:
        return np.concatenate([np.asarray(b.fixed_mask, dtype=bool) for b in self.biomarkers])

    @property
    def random_index(self) -> np.ndarray:
        return np.flatnonzero(~self.fixed_mask)

    @property
    def fixed_index(self) -> np.ndarray:
        return np.flatnonzero(self.fixed_mask)

    @property
    def n_random(self) -> int:
        return int((~self.fixed_mask).sum())

    @property
    def df(self) -> float:
        return float(self.n_random + 1) if self.iw_df is None else float(self.iw_df)

    @property
    def scale_matrix(self) -> np.ndarray:
        if self.iw_scale is None:
            return np.eye(self.n_random)
        return np.asarray(self.iw_scale, dtype=float)

    def block(self, beta, k: int) -> np.ndarray:
        o = self.offsets
        return np.asarray(beta)[..., o[k] : o[k + 1]]

    def parameter_names(self, labels=None) -> list[str]:
        names = {"linear": ("intercept", "slope"),
                 "nonlinear3": ("asymptote", "intercept", "log_rate"),
                 "viral": ("plateau", "decay_rate")}
        labels = labels or [f"b{k + 1}" for k in range(self.n_biomarkers)]
        return [f"{lab}.{n}" for lab, b in zip(labels, self.biomarkers) for n in names[b.kind]]


@dataclass
class ChainState:
    beta: np.ndarray  # (n_individuals, p); fixed coordinates mirror mu
    mu: np.ndarray  # (p,)
    sigma_beta: np.ndarray  # (r, r)
    sigma2_eps: np.ndarray  # (K,)
    tau_new: float

    def copy(self) -> "ChainState":
        return ChainState(
            self.beta.copy(), self.mu.copy(), self.sigma_beta.copy(), self.sigma2_eps.copy(), float(self.tau_new)
        )


# --------------------------------------------------------------------------- likelihood


def _gauss_loglik(resid: np.ndarray, sigma2: float) -> float:
    if not sigma2 > 0:
        raise DomainError("error variance must be positive")
    n = resid.size
    return -0.5 * (n * (LOG_2PI + math.log(sigma2)) + float(resid @ resid) / sigma2)


def loglik_individual_univariate(y, t, tau, beta, sigma2, spec: GrowthModelSpec) -> float:
    y = np.asarray(y, dtype=float).ravel()
    g = eval_trajectory(spec, beta, tau, t)
    if g.shape != y.shape:
        raise InvalidArgumentError("measurement and time vectors differ in length")
    return _gauss_loglik(y - g, float(sigma2))


def loglik_individual_bivariate(y1, y2, t, tau, beta1, beta2, sigma_eps, spec: BivariateSpec) -> float:
    """Joint log-likelihood of both biomarkers with independent errors.

    ``sigma_eps`` is either the two error variances or their 2x2 diagonal
    covariance matrix.
    """
    s = np.asarray(sigma_eps, dtype=float)
    if s.ndim == 2:
        if s.shape != (2, 2) or s[0, 1] != 0 or s[1, 0] != 0:
            raise InvalidArgumentError("measurement-error covariance must be diagonal")
        s = np.diag(s)
    return loglik_individual_univariate(y1, t, tau, beta1, s[0], spec.first) + loglik_individual_univariate(
        y2, t, tau, beta2, s[1], spec.second
    )


def loglik_individual(y, t, tau, beta, sigma2_eps, model: ModelSpec) -> float:
    """Log-likelihood of one individual's measurements ``y`` (shape (K, n))."""
    y = np.atleast_2d(y)
    return sum(
        loglik_individual_univariate(y[k], t, tau, model.block(beta, k), sigma2_eps[k], spec)
        for k, spec in enumerate(model.biomarkers)
    )


# --------------------------------------------------------------------------- prior densities


def log_normal(x, mean, var) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum(-0.5 * (LOG_2PI + np.log(var) + (x - mean) ** 2 / var)))


def log_mvnormal(x, mean, cov) -> float:
    x = np.atleast_2d(np.asarray(x, dtype=float) - mean)
    d = x.shape[1]
    if d == 0:
        return 0.0
    chol = _cholesky(cov)
    z = np.linalg.solve(chol, x.T)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return float(-0.5 * (x.shape[0] * (d * LOG_2PI + logdet) + np.sum(z * z)))


def log_inverse_gamma(x, shape, scale) -> float:
    if not x > 0:
        return -math.inf
    return shape * math.log(scale) - math.lgamma(shape) - (shape + 1.0) * math.log(x) - scale / x


def log_inverse_wishart(sigma, df, scale) -> float:
    sigma = np.asarray(sigma, dtype=float)
    scale = np.asarray(scale, dtype=float)
    d = sigma.shape[0]
    if d == 0:
        return 0.0
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        return -math.inf
    logdet_sigma = 2.0 * np.log(np.diag(chol)).sum()
    _, logdet_scale = np.linalg.slogdet(scale)
    inv = np.linalg.solve(sigma, scale)
    return float(
        0.5 * df * logdet_scale
        - 0.5 * df * d * math.log(2.0)
        - multigammaln(0.5 * df, d)
        - 0.5 * (df + d + 1.0) * logdet_sigma
        - 0.5 * np.trace(inv)
    )


def logprior(state: ChainState, model: ModelSpec) -> float:
    """Prior log density; ``-inf`` outside the support of ``tau_new``."""
    if not model.tau_lo <= state.tau_new <= model.tau_hi:
        return -math.inf
    lp = -math.log(model.tau_hi - model.tau_lo)
    lp += log_normal(state.mu, 0.0, model.mu_prior_var)
    for s2 in state.sigma2_eps:
        lp += log_inverse_gamma(float(s2), model.eps_shape, model.eps_scale)
    lp += log_inverse_wishart(state.sigma_beta, model.df, model.scale_matrix)
    ridx = model.random_index
    if state.beta.shape[0] and ridx.size:
        lp += log_mvnormal(state.beta[:, ridx], state.mu[ridx], state.sigma_beta)
    return lp


# --------------------------------------------------------------------------- conjugate conditionals


def _cholesky(m) -> np.ndarray:
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise NumericalSingularityError("matrix is not positive definite") from None


def full_conditional_mu(beta_random, sigma_beta, prior_var: float = 1e6):
    """Normal conditional of the random-coordinate means.

    Returns ``(mean, cov)`` with precision ``n Sigma^-1 + I / prior_var``.
    """
    beta_random = np.atleast_2d(np.asarray(beta_random, dtype=float))
    r = np.asarray(sigma_beta).shape[0]
    n = beta_random.shape[0] if beta_random.size else 0
    if n == 0:
        return np.zeros(r), prior_var * np.eye(r)
    chol = _cholesky(sigma_beta)
    sinv = np.linalg.inv(chol.T) @ np.linalg.inv(chol)
    prec = n * sinv + np.eye(r) / prior_var
    cov = np.linalg.inv(prec)
    mean = cov @ (sinv @ beta_random.sum(axis=0))
    return mean, 0.5 * (cov + cov.T)


def full_conditional_sigma_beta(beta_random, mu_random, df: float, scale):
    """Inverse-Wishart conditional: ``(df + n, scale + scatter)``."""
    beta_random = np.atleast_2d(np.asarray(beta_random, dtype=float))
    scale = np.asarray(scale, dtype=float)
    if beta_random.size == 0:
        return float(df), scale.copy()
    if beta_random.shape[1] != scale.shape[0]:
        raise InvalidArgumentError("random-effect dimension does not match the scale matrix")
    dev = beta_random - np.asarray(mu_random, dtype=float)
    return float(df + dev.shape[0]), scale + dev.T @ dev


def full_conditional_sigma_eps(residuals, shape: float, scale: float):
    """Inverse-gamma conditional of an error variance: ``(a + N/2, b + SS/2)``."""
    r = np.asarray(residuals, dtype=float).ravel()
    return shape + 0.5 * r.size, scale + 0.5 * float(r @ r)


# --------------------------------------------------------------------------- samplers
# The draw order below is mirrored exactly by the compiled kernel.


def sample_mvnormal_precision(mean, prec_chol, rng: np.random.Generator) -> np.ndarray:
    """Draw from N(mean, (L L^T)^-1) given the lower Cholesky factor L of the precision."""
    z = rng.standard_normal(len(mean))
    return mean + np.linalg.solve(prec_chol.T, z)


def sample_inverse_gamma(shape: float, scale: float, rng: np.random.Generator) -> float:
    return scale / rng.standard_gamma(shape)


def sample_inverse_wishart(df: float, scale, rng: np.random.Generator) -> np.ndarray:
    """Bartlett construction.

    With ``scale = U U^T`` and ``A`` the Bartlett factor of a standard
    Wishart(df, I), ``U A^-T A^-1 U^T ~ InvWishart(df, scale)``.
    Consumes ``d`` gamma variates then ``d(d-1)/2`` normals (row-major, below the diagonal).
    """
    scale = np.asarray(scale, dtype=float)
    d = scale.shape[0]
    a = np.zeros((d, d))
    for i in range(d):
        a[i, i] = math.sqrt(2.0 * rng.standard_gamma(0.5 * (df - i)))
    for i in range(1, d):
        for j in range(i):
            a[i, j] = rng.standard_normal()
    u = _cholesky(scale)
    ainv = np.linalg.inv(a)
    m = u @ ainv.T
    return m @ m.T


def iw_prior_correlations(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Correlations of draws from IW(d + 1, I); each marginal is Uniform(-1, 1)."""
    out = np.empty(n)
    for k in range(n):
        s = sample_inverse_wishart(d + 1.0, np.eye(d), rng)
        out[k] = s[0, 1] / math.sqrt(s[0, 0] * s[1, 1])
    return out
