"""Pure NumPy Metropolis-within-Gibbs kernel.

Reference implementation and import-time fallback for the compiled kernel in
``_ckernel.pyx``. Both consume the bit generator in the same order, so given
the same seed they produce the same chain up to floating-point rounding.
"""
from __future__ import annotations

import math

import numpy as np

from ..bayes import ChainState
from ..errors import NumericalSingularityError
from .problem import (
    BETA,
    FIXED,
    INDEPENDENCE,
    JOINT,
    MU,
    SIGMA_BETA,
    SIGMA_EPS,
    TAU,
    Problem,
    Tuning,
)

TARGET_SCALAR = 0.44
TARGET_VECTOR = 0.234
ADAPT_EXPONENT = 0.6
SHRINK = 0.1


def _eval(kind: int, params: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Vectorised growth curves; ``params`` has one row per entry of ``s``."""
    if kind == 0:
        return params[:, 0] + params[:, 1] * s
    if kind == 1:
        with np.errstate(over="ignore", invalid="ignore"):
            rate = np.exp(params[:, 2])
            arg = np.where(s > 0, rate * s, 0.0)
            return params[:, 0] + (params[:, 1] - params[:, 0]) * np.exp(-arg)
    with np.errstate(over="ignore"):
        return params[:, 0] * (1.0 + np.exp(-params[:, 1] * s))


def reflect(x: float, lo: float, hi: float) -> float:
    width = hi - lo
    z = math.fmod(x - lo, 2.0 * width)
    if z < 0:
        z += 2.0 * width
    if z > width:
        z = 2.0 * width - z
    return lo + z


def _accept_prob(log_alpha: float) -> float:
    if log_alpha != log_alpha:
        return 0.0
    return 1.0 if log_alpha >= 0 else math.exp(log_alpha)


def _log(u: float) -> float:
    return math.log(u) if u > 0 else -math.inf


def _chol(m):
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        return None


class PyKernel:
    backend = "python"

    def __init__(self, problem: Problem, state: ChainState, tuning: Tuning, rng: np.random.Generator,
                 target_scalar: float = TARGET_SCALAR, target_vector: float = TARGET_VECTOR):
        self.pb = problem
        self.state = state
        self.tun = tuning
        self.rng = rng
        self.target_scalar = target_scalar
        self.target_vector = target_vector
        self.ss = self._ss_all(state.beta, self._tau_vec(state.tau_new))

    # ------------------------------------------------------------------ likelihood pieces

    def _tau_vec(self, tau_new: float) -> np.ndarray:
        tau = self.pb.tau.copy()
        if self.pb.new_index >= 0:
            tau[self.pb.new_index] = tau_new
        return tau

    def _ss_biomarker(self, k: int, beta: np.ndarray, tau: np.ndarray) -> np.ndarray:
        pb = self.pb
        owner = pb.obs_owner
        params = beta[owner, pb.offsets[k] : pb.offsets[k + 1]]
        resid = pb.y[k] - _eval(int(pb.kinds[k]), params, pb.t + tau[owner])
        return np.bincount(owner, weights=resid * resid, minlength=pb.n)

    def _ss_all(self, beta: np.ndarray, tau: np.ndarray) -> np.ndarray:
        if self.pb.n == 0:
            return np.zeros((0, self.pb.n_biomarkers))
        return np.stack([self._ss_biomarker(k, beta, tau) for k in range(self.pb.n_biomarkers)], axis=1)

    def _ss_one(self, i: int, beta_i: np.ndarray, tau_i: float) -> np.ndarray:
        pb = self.pb
        a, b = pb.obs_start[i], pb.obs_start[i + 1]
        s = pb.t[a:b] + tau_i
        out = np.empty(pb.n_biomarkers)
        for k in range(pb.n_biomarkers):
            params = np.broadcast_to(beta_i[pb.offsets[k] : pb.offsets[k + 1]], (b - a, pb.offsets[k + 1] - pb.offsets[k]))
            resid = pb.y[k, a:b] - _eval(int(pb.kinds[k]), params, s)
            out[k] = resid @ resid
        return out

    # ------------------------------------------------------------------ adaptation

    def _switch_proposals(self, count: int):
        tun, r = self.tun, self.pb.r
        if r > 0:
            for i in range(self.pb.n):
                cov = self._moment_cov(tun.beta_sum[i], tun.beta_outer[i], count)
                chol = _chol(cov)
                if chol is not None:
                    tun.beta_chol[i] = chol
                    tun.beta_logscale[i] = math.log(2.38 / math.sqrt(r))
        if self.pb.new_index >= 0:
            cov = self._moment_cov(tun.joint_sum, tun.joint_outer, count)
            chol = _chol(cov)
            if chol is not None:
                tun.joint_chol[:] = chol
                tun.joint_logscale[0] = math.log(2.38 / math.sqrt(r + 1))

    @staticmethod
    def _moment_cov(s, outer, count):
        d = s.size
        mean = s / count
        cov = outer / count - np.outer(mean, mean)
        # shrink toward the diagonal: few accepted moves give near-singular estimates
        cov[~np.eye(d, dtype=bool)] *= 1.0 - SHRINK
        jitter = 1e-10 * (max(np.trace(cov) / d, 0.0) + 1e-300)
        return cov + jitter * np.eye(d)

    # ------------------------------------------------------------------ main loop

    def run(self, n_iter: int, start: int = 0, adapt_window: int = 0, burn_in: int = 0, thin: int = 1,
            blocks: int = 0xFF, out: dict | None = None) -> None:
        pb, st, tun, rng = self.pb, self.state, self.tun, self.rng
        n, r, K = pb.n, pb.r, pb.n_biomarkers
        ridx, fidx = pb.random_index, pb.fixed_index
        new = pb.new_index
        half, quarter = adapt_window // 2, adapt_window // 4
        n_total_obs = pb.n_obs
        self.ss = self._ss_all(st.beta, self._tau_vec(st.tau_new))
        for t in range(start, start + n_iter):
            adapting = t < adapt_window
            gamma = (t + 1.0) ** -ADAPT_EXPONENT
            counting = not adapting
            if t == half and half > quarter:
                self._switch_proposals(half - quarter)
            tau_vec = self._tau_vec(st.tau_new)

            if blocks & MU and r > 0:
                chol_s = _chol(st.sigma_beta)
                if chol_s is None:
                    raise NumericalSingularityError("random-effects covariance is singular", t)
                linv = np.linalg.inv(chol_s)
                sinv = linv.T @ linv
                prec = np.eye(r) / pb.mu_prior_var
                rhs = np.zeros(r)
                if n > 0:
                    prec = prec + n * sinv
                    rhs = sinv @ st.beta[:, ridx].sum(axis=0)
                chol_p = _chol(prec)
                if chol_p is None:
                    raise NumericalSingularityError("mean precision is singular", t)
                mean = np.linalg.solve(chol_p.T, np.linalg.solve(chol_p, rhs))
                z = rng.standard_normal(r)
                st.mu[ridx] = mean + np.linalg.solve(chol_p.T, z)
                self._count(counting, 0, 1, 1)

            if blocks & SIGMA_BETA and r > 0:
                dev = st.beta[:, ridx] - st.mu[ridx]
                scale = pb.iw_scale + dev.T @ dev
                st.sigma_beta[:] = self._sample_iw(pb.iw_df + n, scale, t)
                self._count(counting, 1, 1, 1)

            if blocks & SIGMA_EPS:
                for k in range(K):
                    a = pb.eps_shape + 0.5 * n_total_obs
                    b = pb.eps_scale + 0.5 * float(self.ss[:, k].sum())
                    st.sigma2_eps[k] = b / rng.standard_gamma(a)
                self._count(counting, 2, 1, 1)

            chol_s = _chol(st.sigma_beta) if r > 0 else np.zeros((0, 0))
            if chol_s is None:
                raise NumericalSingularityError("random-effects covariance is singular", t)
            mu_r = st.mu[ridx]

            def quad(x):
                if r == 0:
                    return np.zeros(x.shape[:-1])
                w = np.linalg.solve(chol_s, (x - mu_r).T)
                return (w * w).sum(axis=0)

            if blocks & FIXED:
                for j, c in enumerate(fidx):
                    k = int(np.searchsorted(pb.offsets, c, side="right") - 1)
                    z = rng.standard_normal()
                    u = rng.random()
                    cur = st.mu[c]
                    prop = cur + math.exp(tun.fixed_logscale[j]) * z
                    if n > 0:
                        trial = st.beta.copy()
                        trial[:, c] = prop
                        ss_new = self._ss_biomarker(k, trial, tau_vec)
                        dll = -0.5 * (ss_new.sum() - self.ss[:, k].sum()) / st.sigma2_eps[k]
                    else:
                        ss_new = None
                        dll = 0.0
                    log_alpha = dll - 0.5 * (prop * prop - cur * cur) / pb.mu_prior_var
                    acc = _log(u) < log_alpha
                    if acc:
                        st.mu[c] = prop
                        if n > 0:
                            st.beta[:, c] = prop
                            self.ss[:, k] = ss_new
                    if adapting:
                        tun.fixed_logscale[j] += gamma * (_accept_prob(log_alpha) - self.target_scalar)
                    self._count(counting, 3, 1, int(acc))

            if blocks & BETA and r > 0 and n > 0:
                z = rng.standard_normal(n * r).reshape(n, r)
                u = rng.random(n)
                step = np.exp(tun.beta_logscale)[:, None] * np.einsum("nij,nj->ni", tun.beta_chol, z)
                trial = st.beta.copy()
                trial[:, ridx] += step
                ss_new = self._ss_all(trial, tau_vec)
                dq = quad(trial[:, ridx]) - quad(st.beta[:, ridx])
                log_alpha = -0.5 * ((ss_new - self.ss) / st.sigma2_eps).sum(axis=1) - 0.5 * dq
                with np.errstate(divide="ignore"):
                    acc = np.log(u) < log_alpha
                st.beta[acc] = trial[acc]
                self.ss[acc] = ss_new[acc]
                if adapting:
                    with np.errstate(over="ignore", invalid="ignore"):
                        prob = np.where(np.isnan(log_alpha), 0.0, np.exp(np.minimum(log_alpha, 0.0)))
                    tun.beta_logscale += gamma * (prob - self.target_vector)
                self._count(counting, 4, n, int(acc.sum()))

            if new >= 0:
                lo, hi = pb.tau_lo, pb.tau_hi
                if blocks & TAU:
                    z = rng.standard_normal()
                    u = rng.random()
                    prop = reflect(st.tau_new + math.exp(tun.tau_logscale[0]) * z, lo, hi)
                    ss_new = self._ss_one(new, st.beta[new], prop)
                    log_alpha = -0.5 * float(((ss_new - self.ss[new]) / st.sigma2_eps).sum())
                    acc = _log(u) < log_alpha
                    if acc:
                        st.tau_new = prop
                        self.ss[new] = ss_new
                    if adapting:
                        tun.tau_logscale[0] += gamma * (_accept_prob(log_alpha) - self.target_scalar)
                    self._count(counting, 5, 1, int(acc))

                if blocks & JOINT:
                    z = rng.standard_normal(r + 1)
                    u = rng.random()
                    step = math.exp(tun.joint_logscale[0]) * (tun.joint_chol @ z)
                    prop_tau = st.tau_new + step[r]
                    if lo <= prop_tau <= hi:
                        trial = st.beta[new].copy()
                        trial[ridx] += step[:r]
                        ss_new = self._ss_one(new, trial, prop_tau)
                        dq = float(quad(trial[ridx][None, :])[0] - quad(st.beta[new, ridx][None, :])[0])
                        log_alpha = -0.5 * float(((ss_new - self.ss[new]) / st.sigma2_eps).sum()) - 0.5 * dq
                    else:
                        log_alpha = -math.inf
                    acc = _log(u) < log_alpha
                    if acc:
                        st.beta[new] = trial
                        st.tau_new = prop_tau
                        self.ss[new] = ss_new
                    if adapting:
                        tun.joint_logscale[0] += gamma * (_accept_prob(log_alpha) - self.target_vector)
                    self._count(counting, 6, 1, int(acc))

                if blocks & INDEPENDENCE:
                    z = rng.standard_normal(r)
                    u1 = rng.random()
                    u2 = rng.random()
                    trial = st.beta[new].copy()
                    if r > 0:
                        trial[ridx] = mu_r + chol_s @ z
                    prop_tau = lo + (hi - lo) * u1
                    ss_new = self._ss_one(new, trial, prop_tau)
                    log_alpha = -0.5 * float(((ss_new - self.ss[new]) / st.sigma2_eps).sum())
                    acc = _log(u2) < log_alpha
                    if acc:
                        st.beta[new] = trial
                        st.tau_new = prop_tau
                        self.ss[new] = ss_new
                    self._count(counting, 7, 1, int(acc))

            if quarter <= t < half and half > quarter:
                if r > 0 and n > 0:
                    x = st.beta[:, ridx]
                    tun.beta_sum += x
                    tun.beta_outer += x[:, :, None] * x[:, None, :]
                if new >= 0:
                    xj = np.append(st.beta[new, ridx], st.tau_new)
                    tun.joint_sum += xj
                    tun.joint_outer += np.outer(xj, xj)

            if out is not None and t >= burn_in and (t - burn_in + 1) % thin == 0:
                self._store(out, (t - burn_in + 1) // thin - 1)

    def _count(self, counting, slot, proposed, accepted):
        if counting:
            self.tun.proposed[slot] += proposed
            self.tun.accepted[slot] += accepted

    def _sample_iw(self, df, scale, t):
        rng = self.rng
        d = scale.shape[0]
        a = np.zeros((d, d))
        for i in range(d):
            a[i, i] = math.sqrt(2.0 * rng.standard_gamma(0.5 * (df - i)))
        for i in range(1, d):
            for j in range(i):
                a[i, j] = rng.standard_normal()
        u = _chol(scale)
        if u is None:
            raise NumericalSingularityError("inverse-Wishart scale is not positive definite", t)
        m = u @ np.linalg.inv(a).T
        return m @ m.T

    def _store(self, out, k):
        st = self.state
        out["mu"][k] = st.mu
        out["sigma_beta"][k] = st.sigma_beta
        out["sigma2_eps"][k] = st.sigma2_eps
        out["tau"][k] = st.tau_new
        if self.pb.new_index >= 0:
            out["beta_new"][k] = st.beta[self.pb.new_index]
        if "beta" in out:
            out["beta"][k] = st.beta
