# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Metropolis-within-Gibbs kernel.

Same algorithm and random-number consumption order as ``_pykernel.PyKernel``;
the whole chain runs in C against numpy's bit generator.
"""
import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp, log, sqrt, fmod, isnan, INFINITY, pow
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_standard_normal, random_standard_gamma, random_standard_uniform,
)

from ..errors import NumericalSingularityError

cnp.import_array()

cdef enum:
    MAXD = 9

# block bits, same as problem.py
cdef enum:
    B_MU = 1
    B_SIGMA = 2
    B_EPS = 4
    B_FIXED = 8
    B_BETA = 16
    B_TAU = 32
    B_JOINT = 64
    B_INDEP = 128

cdef double TARGET_SCALAR = 0.44
cdef double TARGET_VECTOR = 0.234
cdef double ADAPT_EXPONENT = 0.6
cdef double SHRINK = 0.1


cdef int chol(const double* a, double* l, int d) noexcept nogil:
    """Lower Cholesky factor of the row-major d x d matrix a; -1 if not PD."""
    cdef int i, j, k
    cdef double s
    for i in range(d * d):
        l[i] = 0.0
    for j in range(d):
        s = a[j * d + j]
        for k in range(j):
            s -= l[j * d + k] * l[j * d + k]
        if not s > 0.0:
            return -1
        l[j * d + j] = sqrt(s)
        for i in range(j + 1, d):
            s = a[i * d + j]
            for k in range(j):
                s -= l[i * d + k] * l[j * d + k]
            l[i * d + j] = s / l[j * d + j]
    return 0


cdef void solve_lower(const double* l, const double* b, double* x, int d) noexcept nogil:
    cdef int i, k
    cdef double s
    for i in range(d):
        s = b[i]
        for k in range(i):
            s -= l[i * d + k] * x[k]
        x[i] = s / l[i * d + i]


cdef void solve_lower_t(const double* l, const double* b, double* x, int d) noexcept nogil:
    """Solve L^T x = b."""
    cdef int i, k
    cdef double s
    for i in range(d - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, d):
            s -= l[k * d + i] * x[k]
        x[i] = s / l[i * d + i]


cdef void invert_lower(const double* l, double* out, int d) noexcept nogil:
    cdef int i, j
    cdef double e[MAXD]
    cdef double col[MAXD]
    for j in range(d):
        for i in range(d):
            e[i] = 1.0 if i == j else 0.0
        solve_lower(l, e, col, d)
        for i in range(d):
            out[i * d + j] = col[i]


cdef inline double accept_prob(double log_alpha) noexcept nogil:
    if isnan(log_alpha):
        return 0.0
    if log_alpha >= 0.0:
        return 1.0
    return exp(log_alpha)


cdef inline double reflect(double x, double lo, double hi) noexcept nogil:
    cdef double width = hi - lo
    cdef double z = fmod(x - lo, 2.0 * width)
    if z < 0:
        z += 2.0 * width
    if z > width:
        z = 2.0 * width - z
    return lo + z


cdef class CKernel:
    backend = "compiled"

    cdef object pb, state, tun, rng, _capsule, lock
    cdef bitgen_t* bg
    cdef int n, K, p, r, f, new_idx, n_obs
    cdef cnp.int32_t[::1] kinds, offsets, ridx, fidx
    cdef cnp.int64_t[::1] obs_start
    cdef double[::1] t, tau
    cdef double[:, ::1] y
    cdef double tau_lo, tau_hi, mu_var, eps_a, eps_b, iw_df
    cdef double[:, ::1] iw_scale
    cdef double[:, ::1] beta
    cdef double[::1] mu, s2
    cdef double[:, ::1] sigma
    cdef double tau_new
    cdef double[:, ::1] ss
    cdef double[::1] beta_logscale, tau_logscale, fixed_logscale, joint_logscale
    cdef double[:, :, ::1] beta_chol
    cdef double[:, ::1] joint_chol
    cdef double[:, ::1] beta_sum
    cdef double[:, :, ::1] beta_outer
    cdef double[::1] joint_sum
    cdef double[:, ::1] joint_outer
    cdef cnp.int64_t[::1] proposed, accepted
    cdef double[::1] znorm, unif, ss_tmp
    cdef double target_scalar, target_vector
    cdef double chol_s[MAXD * MAXD]
    cdef int err_iter
    cdef int err_code

    def __init__(self, problem, state, tuning, rng, double target_scalar=TARGET_SCALAR,
                 double target_vector=TARGET_VECTOR):
        self.pb = problem
        self.state = state
        self.tun = tuning
        self.rng = rng
        bit_generator = rng.bit_generator
        self._capsule = bit_generator.capsule
        self.lock = bit_generator.lock
        self.bg = <bitgen_t*> PyCapsule_GetPointer(self._capsule, "BitGenerator")
        self.target_scalar = target_scalar
        self.target_vector = target_vector
        self.n = problem.n
        self.K = problem.n_biomarkers
        self.p = problem.p
        self.r = problem.r
        self.f = problem.f
        if self.r + 1 > MAXD:
            raise ValueError("too many random effects for the compiled kernel")
        self.new_idx = problem.new_index
        self.n_obs = problem.n_obs
        self.kinds = problem.kinds
        self.offsets = problem.offsets
        self.ridx = problem.random_index
        self.fidx = problem.fixed_index
        self.obs_start = problem.obs_start
        self.t = problem.t
        self.tau = problem.tau
        self.y = problem.y
        self.tau_lo = problem.tau_lo
        self.tau_hi = problem.tau_hi
        self.mu_var = problem.mu_prior_var
        self.eps_a = problem.eps_shape
        self.eps_b = problem.eps_scale
        self.iw_df = problem.iw_df
        self.iw_scale = problem.iw_scale
        self.znorm = np.zeros(max(self.n * self.r, 1))
        self.unif = np.zeros(max(self.n, 1))
        self.ss_tmp = np.zeros(max(self.n, 1))
        self.ss = np.zeros((max(self.n, 1), self.K))

    # ------------------------------------------------------------------ likelihood pieces

    cdef double ss_one_k(self, int i, int k, const double* b, double tau_i) noexcept nogil:
        """Residual sum of squares of biomarker k for individual i; b is the full parameter row."""
        cdef cnp.int64_t j
        cdef int kind = self.kinds[k]
        cdef const double* q = b + self.offsets[k]
        cdef double acc = 0.0, s, g, res, rate = 0.0, arg
        if kind == 1:
            rate = exp(q[2])
        for j in range(self.obs_start[i], self.obs_start[i + 1]):
            s = self.t[j] + tau_i
            if kind == 0:
                g = q[0] + q[1] * s
            elif kind == 1:
                arg = rate * s if s > 0 else 0.0
                g = q[0] + (q[1] - q[0]) * exp(-arg)
            else:
                g = q[0] * (1.0 + exp(-q[1] * s))
            res = self.y[k, j] - g
            acc += res * res
        return acc

    cdef inline double tau_of(self, int i) noexcept nogil:
        return self.tau_new if i == self.new_idx else self.tau[i]

    cdef void recompute_ss(self) noexcept nogil:
        cdef int i, k
        for i in range(self.n):
            for k in range(self.K):
                self.ss[i, k] = self.ss_one_k(i, k, &self.beta[i, 0], self.tau_of(i))

    cdef double quad(self, const double* x_r) noexcept nogil:
        """(x - mu_R)^T Sigma^-1 (x - mu_R) using the cached Cholesky factor."""
        cdef double dev[MAXD]
        cdef double w[MAXD]
        cdef int a
        cdef double acc = 0.0
        for a in range(self.r):
            dev[a] = x_r[a] - self.mu[self.ridx[a]]
        solve_lower(self.chol_s, dev, w, self.r)
        for a in range(self.r):
            acc += w[a] * w[a]
        return acc

    cdef double quad_row(self, int i) noexcept nogil:
        cdef double x[MAXD]
        cdef int a
        for a in range(self.r):
            x[a] = self.beta[i, self.ridx[a]]
        return self.quad(x)

    cdef inline void count(self, bint counting, int slot, long prop, long acc) noexcept nogil:
        if counting:
            self.proposed[slot] += prop
            self.accepted[slot] += acc

    # ------------------------------------------------------------------ adaptation

    cdef void moment_chol(self, const double* s, const double* outer, int d, double count,
                          double* dest, double* logscale) noexcept nogil:
        cdef double cov[MAXD * MAXD]
        cdef double l[MAXD * MAXD]
        cdef double mean[MAXD]
        cdef double tr = 0.0, jitter
        cdef int a, b
        for a in range(d):
            mean[a] = s[a] / count
        for a in range(d):
            for b in range(d):
                cov[a * d + b] = outer[a * d + b] / count - mean[a] * mean[b]
                if a != b:
                    cov[a * d + b] *= 1.0 - SHRINK
            tr += cov[a * d + a]
        jitter = 1e-10 * ((tr / d if tr > 0 else 0.0) + 1e-300)
        for a in range(d):
            cov[a * d + a] += jitter
        if chol(cov, l, d) == 0:
            for a in range(d * d):
                dest[a] = l[a]
            logscale[0] = log(2.38 / sqrt(<double> d))

    cdef void switch_proposals(self, double count) noexcept nogil:
        cdef int i
        if self.r > 0:
            for i in range(self.n):
                self.moment_chol(&self.beta_sum[i, 0], &self.beta_outer[i, 0, 0], self.r, count,
                                 &self.beta_chol[i, 0, 0], &self.beta_logscale[i])
        if self.new_idx >= 0:
            self.moment_chol(&self.joint_sum[0], &self.joint_outer[0, 0], self.r + 1, count,
                             &self.joint_chol[0, 0], &self.joint_logscale[0])

    # ------------------------------------------------------------------ main loop

    def run(self, int n_iter, int start=0, int adapt_window=0, int burn_in=0, int thin=1,
            int blocks=0xFF, dict out=None):
        st, tun = self.state, self.tun
        self.beta = st.beta
        self.mu = st.mu
        self.sigma = st.sigma_beta
        self.s2 = st.sigma2_eps
        self.tau_new = st.tau_new
        self.beta_logscale = tun.beta_logscale
        self.beta_chol = tun.beta_chol
        self.tau_logscale = tun.tau_logscale
        self.fixed_logscale = tun.fixed_logscale
        self.joint_logscale = tun.joint_logscale
        self.joint_chol = tun.joint_chol
        self.beta_sum = tun.beta_sum
        self.beta_outer = tun.beta_outer
        self.joint_sum = tun.joint_sum
        self.joint_outer = tun.joint_outer
        self.proposed = tun.proposed
        self.accepted = tun.accepted

        cdef double[:, ::1] o_mu, o_s2, o_bnew
        cdef double[:, :, ::1] o_sigma, o_beta
        cdef double[::1] o_tau
        cdef bint store = out is not None
        cdef bint store_beta = store and "beta" in out
        o_mu = o_s2 = o_bnew = np.zeros((1, 1))
        o_sigma = o_beta = np.zeros((1, 1, 1))
        o_tau = np.zeros(1)
        if store:
            o_mu = out["mu"]
            o_sigma = out["sigma_beta"]
            o_s2 = out["sigma2_eps"]
            o_tau = out["tau"]
            o_bnew = out["beta_new"]
            if store_beta:
                o_beta = out["beta"]

        self.err_code = 0
        with self.lock, nogil:
            self.recompute_ss()
            self._loop(n_iter, start, adapt_window, burn_in, thin, blocks, store, store_beta,
                       o_mu, o_sigma, o_s2, o_tau, o_bnew, o_beta)
        st.tau_new = self.tau_new
        if self.err_code == 1:
            raise NumericalSingularityError("random-effects covariance is singular", self.err_iter)
        if self.err_code == 2:
            raise NumericalSingularityError("mean precision is singular", self.err_iter)
        if self.err_code == 3:
            raise NumericalSingularityError("inverse-Wishart scale is not positive definite", self.err_iter)

    cdef void _loop(self, int n_iter, int start, int adapt_window, int burn_in, int thin, int blocks,
                    bint store, bint store_beta,
                    double[:, ::1] o_mu, double[:, :, ::1] o_sigma, double[:, ::1] o_s2,
                    double[::1] o_tau, double[:, ::1] o_bnew, double[:, :, ::1] o_beta) noexcept nogil:
        cdef int n = self.n, r = self.r, K = self.K, p = self.p, new = self.new_idx
        cdef int half = adapt_window // 2, quarter = adapt_window // 4
        cdef int it, i, j, k, a, b, c, kk
        cdef bint adapting, counting, acc
        cdef double gamma, z, u, u2, prop, cur, dll, log_alpha, scale, shp, rte, tot
        cdef double lo = self.tau_lo, hi = self.tau_hi
        cdef double linv[MAXD * MAXD]
        cdef double sinv[MAXD * MAXD]
        cdef double prec[MAXD * MAXD]
        cdef double lp[MAXD * MAXD]
        cdef double smat[MAXD * MAXD]
        cdef double bart[MAXD * MAXD]
        cdef double binv[MAXD * MAXD]
        cdef double m[MAXD * MAXD]
        cdef double lsc[MAXD * MAXD]
        cdef double rhs[MAXD]
        cdef double tmp[MAXD]
        cdef double mean[MAXD]
        cdef double zz[MAXD]
        cdef double step[MAXD]
        cdef double trial[MAXD]
        cdef double xr[MAXD]
        cdef double ssn[4]
        cdef double prop_tau, q_old, q_new
        cdef long nacc
        cdef int slot_k

        for it in range(start, start + n_iter):
            adapting = it < adapt_window
            counting = not adapting
            gamma = pow(it + 1.0, -ADAPT_EXPONENT)
            if it == half and half > quarter:
                self.switch_proposals(<double> (half - quarter))

            # ---- mu (random coordinates): conjugate normal
            if blocks & B_MU and r > 0:
                for a in range(r):
                    for b in range(r):
                        smat[a * r + b] = self.sigma[a, b]
                if chol(smat, self.chol_s, r) != 0:
                    self.err_code = 1
                    self.err_iter = it
                    return
                invert_lower(self.chol_s, linv, r)
                for a in range(r):
                    for b in range(r):
                        tot = 0.0
                        for c in range(r):
                            tot += linv[c * r + a] * linv[c * r + b]
                        sinv[a * r + b] = tot
                for a in range(r):
                    for b in range(r):
                        prec[a * r + b] = (1.0 / self.mu_var if a == b else 0.0)
                    rhs[a] = 0.0
                if n > 0:
                    for a in range(r):
                        tmp[a] = 0.0
                    for i in range(n):
                        for a in range(r):
                            tmp[a] += self.beta[i, self.ridx[a]]
                    for a in range(r):
                        for b in range(r):
                            prec[a * r + b] += n * sinv[a * r + b]
                            rhs[a] += sinv[a * r + b] * tmp[b]
                if chol(prec, lp, r) != 0:
                    self.err_code = 2
                    self.err_iter = it
                    return
                solve_lower(lp, rhs, tmp, r)
                solve_lower_t(lp, tmp, mean, r)
                for a in range(r):
                    zz[a] = random_standard_normal(self.bg)
                solve_lower_t(lp, zz, tmp, r)
                for a in range(r):
                    self.mu[self.ridx[a]] = mean[a] + tmp[a]
                self.count(counting, 0, 1, 1)

            # ---- Sigma_beta: conjugate inverse-Wishart via Bartlett
            if blocks & B_SIGMA and r > 0:
                for a in range(r):
                    for b in range(r):
                        smat[a * r + b] = self.iw_scale[a, b]
                for i in range(n):
                    for a in range(r):
                        tmp[a] = self.beta[i, self.ridx[a]] - self.mu[self.ridx[a]]
                    for a in range(r):
                        for b in range(r):
                            smat[a * r + b] += tmp[a] * tmp[b]
                for a in range(r * r):
                    bart[a] = 0.0
                for a in range(r):
                    bart[a * r + a] = sqrt(2.0 * random_standard_gamma(self.bg, 0.5 * (self.iw_df + n - a)))
                for a in range(1, r):
                    for b in range(a):
                        bart[a * r + b] = random_standard_normal(self.bg)
                if chol(smat, lsc, r) != 0:
                    self.err_code = 3
                    self.err_iter = it
                    return
                invert_lower(bart, binv, r)
                # m = U A^-T
                for a in range(r):
                    for b in range(r):
                        tot = 0.0
                        for c in range(r):
                            tot += lsc[a * r + c] * binv[b * r + c]
                        m[a * r + b] = tot
                for a in range(r):
                    for b in range(r):
                        tot = 0.0
                        for c in range(r):
                            tot += m[a * r + c] * m[b * r + c]
                        self.sigma[a, b] = tot
                self.count(counting, 1, 1, 1)

            # ---- error variances: conjugate inverse-gamma
            if blocks & B_EPS:
                for k in range(K):
                    shp = self.eps_a + 0.5 * self.n_obs
                    tot = 0.0
                    for i in range(n):
                        tot += self.ss[i, k]
                    rte = self.eps_b + 0.5 * tot
                    self.s2[k] = rte / random_standard_gamma(self.bg, shp)
                self.count(counting, 2, 1, 1)

            if r > 0:
                for a in range(r):
                    for b in range(r):
                        smat[a * r + b] = self.sigma[a, b]
                if chol(smat, self.chol_s, r) != 0:
                    self.err_code = 1
                    self.err_iter = it
                    return

            # ---- fixed effects: scalar random-walk Metropolis, whole panel likelihood
            if blocks & B_FIXED:
                for j in range(self.f):
                    c = self.fidx[j]
                    kk = 0
                    while kk + 1 < K and self.offsets[kk + 1] <= c:
                        kk += 1
                    z = random_standard_normal(self.bg)
                    u = random_standard_uniform(self.bg)
                    cur = self.mu[c]
                    prop = cur + exp(self.fixed_logscale[j]) * z
                    dll = 0.0
                    if n > 0:
                        tot = 0.0
                        for i in range(n):
                            self.beta[i, c] = prop
                            self.ss_tmp[i] = self.ss_one_k(i, kk, &self.beta[i, 0], self.tau_of(i))
                            self.beta[i, c] = cur
                            tot += self.ss_tmp[i] - self.ss[i, kk]
                        dll = -0.5 * tot / self.s2[kk]
                    log_alpha = dll - 0.5 * (prop * prop - cur * cur) / self.mu_var
                    acc = log(u) < log_alpha
                    if acc:
                        self.mu[c] = prop
                        for i in range(n):
                            self.beta[i, c] = prop
                            self.ss[i, kk] = self.ss_tmp[i]
                    if adapting:
                        self.fixed_logscale[j] += gamma * (accept_prob(log_alpha) - self.target_scalar)
                    self.count(counting, 3, 1, acc)

            # ---- per-individual random effects: random-walk Metropolis
            if blocks & B_BETA and r > 0 and n > 0:
                for a in range(n * r):
                    self.znorm[a] = random_standard_normal(self.bg)
                for i in range(n):
                    self.unif[i] = random_standard_uniform(self.bg)
                nacc = 0
                for i in range(n):
                    scale = exp(self.beta_logscale[i])
                    for a in range(r):
                        tot = 0.0
                        for b in range(a + 1):
                            tot += self.beta_chol[i, a, b] * self.znorm[i * r + b]
                        step[a] = scale * tot
                    for a in range(p):
                        trial[a] = self.beta[i, a]
                    for a in range(r):
                        trial[self.ridx[a]] += step[a]
                        xr[a] = trial[self.ridx[a]]
                    q_new = self.quad(xr)
                    q_old = self.quad_row(i)
                    dll = 0.0
                    for k in range(K):
                        ssn[k] = self.ss_one_k(i, k, trial, self.tau_of(i))
                        dll += (ssn[k] - self.ss[i, k]) / self.s2[k]
                    log_alpha = -0.5 * dll - 0.5 * (q_new - q_old)
                    acc = log(self.unif[i]) < log_alpha
                    if acc:
                        for a in range(p):
                            self.beta[i, a] = trial[a]
                        for k in range(K):
                            self.ss[i, k] = ssn[k]
                        nacc += 1
                    if adapting:
                        self.beta_logscale[i] += gamma * (accept_prob(log_alpha) - self.target_vector)
                self.count(counting, 4, n, nacc)

            if new >= 0:
                # ---- tau: reflected random walk
                if blocks & B_TAU:
                    z = random_standard_normal(self.bg)
                    u = random_standard_uniform(self.bg)
                    prop_tau = reflect(self.tau_new + exp(self.tau_logscale[0]) * z, lo, hi)
                    dll = 0.0
                    for k in range(K):
                        ssn[k] = self.ss_one_k(new, k, &self.beta[new, 0], prop_tau)
                        dll += (ssn[k] - self.ss[new, k]) / self.s2[k]
                    log_alpha = -0.5 * dll
                    acc = log(u) < log_alpha
                    if acc:
                        self.tau_new = prop_tau
                        for k in range(K):
                            self.ss[new, k] = ssn[k]
                    if adapting:
                        self.tau_logscale[0] += gamma * (accept_prob(log_alpha) - self.target_scalar)
                    self.count(counting, 5, 1, acc)

                # ---- (beta_new, tau) jointly: adaptive random walk, out-of-range rejected
                if blocks & B_JOINT:
                    for a in range(r + 1):
                        zz[a] = random_standard_normal(self.bg)
                    u = random_standard_uniform(self.bg)
                    scale = exp(self.joint_logscale[0])
                    for a in range(r + 1):
                        tot = 0.0
                        for b in range(a + 1):
                            tot += self.joint_chol[a, b] * zz[b]
                        step[a] = scale * tot
                    prop_tau = self.tau_new + step[r]
                    if lo <= prop_tau <= hi:
                        for a in range(p):
                            trial[a] = self.beta[new, a]
                        for a in range(r):
                            trial[self.ridx[a]] += step[a]
                            xr[a] = trial[self.ridx[a]]
                        q_new = self.quad(xr)
                        q_old = self.quad_row(new)
                        dll = 0.0
                        for k in range(K):
                            ssn[k] = self.ss_one_k(new, k, trial, prop_tau)
                            dll += (ssn[k] - self.ss[new, k]) / self.s2[k]
                        log_alpha = -0.5 * dll - 0.5 * (q_new - q_old)
                    else:
                        log_alpha = -INFINITY
                    acc = log(u) < log_alpha
                    if acc:
                        for a in range(p):
                            self.beta[new, a] = trial[a]
                        self.tau_new = prop_tau
                        for k in range(K):
                            self.ss[new, k] = ssn[k]
                    if adapting:
                        self.joint_logscale[0] += gamma * (accept_prob(log_alpha) - self.target_vector)
                    self.count(counting, 6, 1, acc)

                # ---- independence proposal from the population distribution
                if blocks & B_INDEP:
                    for a in range(r):
                        zz[a] = random_standard_normal(self.bg)
                    u = random_standard_uniform(self.bg)
                    u2 = random_standard_uniform(self.bg)
                    for a in range(p):
                        trial[a] = self.beta[new, a]
                    for a in range(r):
                        tot = 0.0
                        for b in range(a + 1):
                            tot += self.chol_s[a * r + b] * zz[b]
                        trial[self.ridx[a]] = self.mu[self.ridx[a]] + tot
                    prop_tau = lo + (hi - lo) * u
                    dll = 0.0
                    for k in range(K):
                        ssn[k] = self.ss_one_k(new, k, trial, prop_tau)
                        dll += (ssn[k] - self.ss[new, k]) / self.s2[k]
                    log_alpha = -0.5 * dll
                    acc = log(u2) < log_alpha
                    if acc:
                        for a in range(p):
                            self.beta[new, a] = trial[a]
                        self.tau_new = prop_tau
                        for k in range(K):
                            self.ss[new, k] = ssn[k]
                    self.count(counting, 7, 1, acc)

            # ---- moment accumulation for proposal shapes
            if quarter <= it < half and half > quarter:
                if r > 0:
                    for i in range(n):
                        for a in range(r):
                            xr[a] = self.beta[i, self.ridx[a]]
                            self.beta_sum[i, a] += xr[a]
                        for a in range(r):
                            for b in range(r):
                                self.beta_outer[i, a, b] += xr[a] * xr[b]
                if new >= 0:
                    for a in range(r):
                        xr[a] = self.beta[new, self.ridx[a]]
                    xr[r] = self.tau_new
                    for a in range(r + 1):
                        self.joint_sum[a] += xr[a]
                        for b in range(r + 1):
                            self.joint_outer[a, b] += xr[a] * xr[b]

            if store and it >= burn_in and (it - burn_in + 1) % thin == 0:
                j = (it - burn_in + 1) // thin - 1
                for a in range(p):
                    o_mu[j, a] = self.mu[a]
                for a in range(r):
                    for b in range(r):
                        o_sigma[j, a, b] = self.sigma[a, b]
                for k in range(K):
                    o_s2[j, k] = self.s2[k]
                o_tau[j] = self.tau_new
                if new >= 0:
                    for a in range(p):
                        o_bnew[j, a] = self.beta[new, a]
                if store_beta:
                    for i in range(n):
                        for a in range(p):
                            o_beta[j, i, a] = self.beta[i, a]
