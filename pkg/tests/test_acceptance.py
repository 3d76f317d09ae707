"""Acceptance criteria, each at its stated tolerance.

A summary line per criterion is printed at the end of the session.
"""
import math
import time

import numpy as np
import pytest
from scipy import integrate, stats

from serorecency.bayes import ChainState, ModelSpec, full_conditional_mu, full_conditional_sigma_beta
from serorecency.growth import GrowthModelSpec, eval_trajectory
from serorecency.mcmc import sampler as smp
from serorecency.mcmc.problem import MU, SIGMA_BETA, SIGMA_EPS, TAU, Tuning, build_problem
from serorecency.mcmc.sampler import SamplerConfig, init_state, run_chain
from serorecency.recency import hpd_interval, p_x
from serorecency.simgen import (
    OUT_OF_SAMPLE,
    TABLE1,
    BiomarkerDef,
    Individual,
    PanelDataset,
    draw_random_effects,
    realistic_config,
    simulate_dataset,
)
from serorecency.study import StudyConfig, run_study

from conftest import model_for

P2, P6 = 2 / 12, 6 / 12
TAUS = (0.014, 0.25, 0.5, 0.75, 0.986)


@pytest.fixture
def criterion(record_property):
    def mark(num, title):
        record_property("criterion", num)
        record_property("title", title)

    def detail(text):
        record_property("detail", text)

    mark.detail = detail
    return mark


# --------------------------------------------------------------------------- shared study runs


@pytest.fixture(scope="session")
def ideal_joint():
    return run_study(StudyConfig(scenario="ideal", models=("AR4&VL", "AR1&AR4"), replicates=20))


@pytest.fixture(scope="session")
def ideal_ar4_marginal():
    return run_study(
        StudyConfig(scenario="ideal", models=("AR4",), replicates=5, tau_indices=(1,), sources=(("AR4", "AR4&VL"),))
    )


@pytest.fixture(scope="session")
def realistic_joint():
    return run_study(StudyConfig(scenario="realistic", models=("AR4&VL",), replicates=20))


@pytest.fixture(scope="session")
def realistic_ar1():
    return run_study(StudyConfig(scenario="realistic", models=("AR1",), replicates=20, tau_indices=(0,)))


@pytest.fixture(scope="session")
def realistic_vl():
    return run_study(StudyConfig(scenario="realistic", models=("VL",), replicates=20, tau_indices=(4,)))


def _medians(result, model, x):
    return {t: result.summary.cell(model, t, x).median for t in sorted({f.tau_truth for f in result.fits})}


# --------------------------------------------------------------------------- 1


def _frozen_draws(ds, model, state, blocks, n, seed):
    pb = build_problem(ds, model)
    kern = smp.kernel_class("auto")(pb, state, Tuning.initial(pb), np.random.default_rng(seed))
    out = smp._allocate(pb, n, False)
    kern.run(n, blocks=blocks, out=out)
    return out


def test_c01_conjugate_blocks(criterion):
    criterion(1, "conjugate full conditionals match closed forms (KS p > 0.01, 1e4 draws)")
    t0 = time.perf_counter()
    ds = simulate_dataset(realistic_config(n_in_sample=40), 0, "AR4&VL").with_new_individual(0)
    model = model_for("AR4&VL")
    st = init_state(ds, model, np.random.default_rng(1))
    st.beta = np.array([ind.random_effects for ind in ds.individuals])
    st.mu = np.array(TABLE1["AR4&VL"].mean, dtype=float)
    ridx = model.random_index
    st.sigma_beta = np.array(TABLE1["AR4&VL"].cov)[np.ix_(ridx, ridx)]
    st.tau_new = ds.out_of_sample[0].tau
    n = 10_000
    pvals = {}

    mean, cov = full_conditional_mu(st.beta[:, ridx], st.sigma_beta, model.mu_prior_var)
    mu = _frozen_draws(ds, model, st.copy(), MU, n, 2)["mu"][:, ridx]
    for j in range(ridx.size):
        pvals[f"mu{j}"] = stats.kstest(mu[:, j], stats.norm(mean[j], math.sqrt(cov[j, j])).cdf).pvalue

    df, scale = full_conditional_sigma_beta(st.beta[:, ridx], st.mu[ridx], model.df, model.scale_matrix)
    sig = _frozen_draws(ds, model, st.copy(), SIGMA_BETA, n, 3)["sigma_beta"]
    d = ridx.size
    for j in range(d):
        ig = stats.invgamma((df - d + 1) / 2, scale=scale[j, j] / 2)
        pvals[f"sigma{j}{j}"] = stats.kstest(sig[:, j, j], ig.cdf).pvalue
    ref = stats.invwishart(df, scale).rvs(n, random_state=np.random.default_rng(4))
    for a, b in ((0, 1), (1, 2), (0, 3)):
        pvals[f"sigma{a}{b}"] = stats.ks_2samp(sig[:, a, b], ref[:, a, b]).pvalue

    eps = _frozen_draws(ds, model, st.copy(), SIGMA_EPS, n, 5)["sigma2_eps"]
    for k, (sl, label) in enumerate(((slice(0, 3), "AR4"), (slice(3, 5), "VL"))):
        spec = model.biomarkers[k]
        resid = np.concatenate([
            ind.y[k] - eval_trajectory(spec, st.beta[i, sl], ind.tau if i < len(ds.individuals) - 1 else st.tau_new,
                                       ind.times)
            for i, ind in enumerate(ds.individuals)
        ])
        a_, b_ = model.eps_shape + resid.size / 2, model.eps_scale + 0.5 * resid @ resid
        pvals[f"eps_{label}"] = stats.kstest(eps[:, k], stats.invgamma(a_, scale=b_).cdf).pvalue

    elapsed = time.perf_counter() - t0
    worst = min(pvals, key=pvals.get)
    criterion.detail(f"min p = {pvals[worst]:.3f} ({worst}), {elapsed:.1f}s")
    assert all(p > 0.01 for p in pvals.values()), pvals
    assert elapsed < 60


# --------------------------------------------------------------------------- 2


def test_c02_quadrature(criterion):
    criterion(2, "tau posterior matches 1-D quadrature (TV < 0.02)")
    t0 = time.perf_counter()
    ind = Individual(0, OUT_OF_SAMPLE, 0.0, np.array([0.0]), np.array([[0.0]]))
    ds = PanelDataset("toy", 0, "AR4", (BiomarkerDef("AR4", "nonlinear3"),), [ind])
    spec = GrowthModelSpec("nonlinear3", (True, False, False))
    model = ModelSpec((spec,))
    beta = np.array([1.5, -1.5, 0.8])
    st = ChainState(beta[None, :].copy(), beta.copy(), np.eye(2), np.array([0.25]), 0.5)
    pb = build_problem(ds, model)
    kern = smp.kernel_class("auto")(pb, st, Tuning.initial(pb), np.random.default_rng(21))
    n_iter = 200_000
    out = smp._allocate(pb, n_iter - 5000, False)
    kern.run(n_iter, adapt_window=5000, burn_in=5000, blocks=TAU, out=out)

    def dens(t):
        g = eval_trajectory(spec, beta, t, [0.0])[0]
        return math.exp(-0.5 * g * g / 0.25)

    edges = np.linspace(0, 1, 21)
    z = integrate.quad(dens, 0, 1)[0]
    p = np.array([integrate.quad(dens, lo, hi)[0] / z for lo, hi in zip(edges[:-1], edges[1:])])
    h = np.histogram(out["tau"], edges)[0] / len(out["tau"])
    tv = 0.5 * np.abs(h - p).sum()
    elapsed = time.perf_counter() - t0
    criterion.detail(f"TV = {tv:.4f}, {elapsed:.1f}s")
    assert tv < 0.02
    assert elapsed < 60


# --------------------------------------------------------------------------- 3


def test_c03_prior_recovery(criterion):
    criterion(3, "empty likelihood recovers U(0,1) tau and U(-1,1) correlations")
    ind = Individual(0, OUT_OF_SAMPLE, 0.0, np.empty(0), np.empty((1, 0)))
    ds = PanelDataset("toy", 0, "AR1", (BiomarkerDef("AR1", "linear"),), [ind])
    # KS assumes independent draws; thin far enough that ESS is close to n
    cfg = SamplerConfig(n_chains=1, iterations=510_000, burn_in=10_000, thin=50, adapt_window=5000, seed=8)
    out = run_chain(ds, model_for("AR1"), cfg)
    tau = out.tau.ravel()
    s = out.sigma_beta[0]
    corr = s[:, 0, 1] / np.sqrt(s[:, 0, 0] * s[:, 1, 1])
    p_tau = stats.kstest(tau, "uniform").pvalue
    p_corr = stats.kstest(corr, stats.uniform(-1, 2).cdf).pvalue
    criterion.detail(f"n = {tau.size}, KS p tau = {p_tau:.3f}, corr = {p_corr:.3f}")
    assert tau.size == 10_000
    assert p_tau > 0.01 and p_corr > 0.01


# --------------------------------------------------------------------------- 4


def test_c04_moment_recovery(criterion):
    criterion(4, "1e5 random-effect draws reproduce every block's moments within 0.02")
    t0 = time.perf_counter()
    rng = np.random.default_rng(44)
    worst = 0.0
    for name, g in TABLE1.items():
        d = draw_random_effects(g.mean_array, g.cov_array, rng, size=100_000)
        worst = max(worst, np.abs(d.mean(axis=0) - g.mean_array).max(), np.abs(np.cov(d.T) - g.cov_array).max())
    elapsed = time.perf_counter() - t0
    criterion.detail(f"max abs error = {worst:.4f}, {elapsed:.1f}s")
    assert worst < 0.02
    assert elapsed < 60


# --------------------------------------------------------------------------- 5-9


def test_c05_ideal_separation(criterion, ideal_joint):
    criterion(5, "ideal: joint models give median P2 >= 0.90 at tau 0.014 and <= 0.10 otherwise")
    parts, ok = [], True
    for model in ("AR4&VL", "AR1&AR4"):
        med = _medians(ideal_joint, model, P2)
        parts.append(f"{model} " + " ".join(f"{v:.3f}" for v in med.values()))
        ok &= med[0.014] >= 0.90 and all(med[t] <= 0.10 for t in TAUS[1:])
    criterion.detail("; ".join(parts))
    assert ok


def test_ideal_separation_gap(ideal_joint):
    for model in ("AR4&VL", "AR1&AR4"):
        med = _medians(ideal_joint, model, P2)
        assert med[0.014] - med[0.25] >= 0.85, (model, med)


def test_c06_realistic_separation(criterion, realistic_joint):
    criterion(6, "realistic: AR4&VL median P2 >= 0.9 at tau 0.014 and <= 0.1 for tau >= 0.25")
    med = _medians(realistic_joint, "AR4&VL", P2)
    criterion.detail(" ".join(f"{v:.3f}" for v in med.values()))
    assert med[0.014] >= 0.9
    assert all(med[t] <= 0.1 for t in TAUS[1:])


def test_c07_ar1_failure_mode(criterion, realistic_ar1):
    criterion(7, "realistic: AR1 median P2 < 0.05 at tau 0.014")
    cell = realistic_ar1.summary.cell("AR1", 0.014, P2)
    criterion.detail(f"median P2 = {cell.median:.3f} (q25 {cell.q25:.3f}, q75 {cell.q75:.3f}, n = {cell.n_used})")
    assert cell.median < 0.05


def test_c08_vl_plateau(criterion, realistic_vl):
    criterion(8, "realistic: VL median P6 > 0.5 at tau 0.986")
    cell = realistic_vl.summary.cell("VL", 0.986, P6)
    criterion.detail(f"median P6 = {cell.median:.3f} (q25 {cell.q25:.3f}, q75 {cell.q75:.3f}, n = {cell.n_used})")
    assert cell.median > 0.5


def test_c09_hpd_narrowing(criterion, ideal_joint, ideal_ar4_marginal):
    criterion(9, "ideal: AR4&VL 95% HPD narrower than AR4 in >= 4 of 5 matched replicates at tau 0.25")
    joint = {f.replicate: f.hpd_width for f in ideal_joint.fits if f.model == "AR4&VL" and f.tau_index == 1}
    uni = {f.replicate: f.hpd_width for f in ideal_ar4_marginal.fits}
    wins = sum(joint[r] < uni[r] for r in range(5))
    criterion.detail(f"{wins}/5; widths joint " + " ".join(f"{joint[r]:.3f}" for r in range(5))
                     + " vs AR4 " + " ".join(f"{uni[r]:.3f}" for r in range(5)))
    assert wins >= 4


# --------------------------------------------------------------------------- 10-11


def test_c10_px_oracle(criterion):
    criterion(10, "P_X equals brute-force count; uniform HPD length 0.95 +- 0.02")
    rng = np.random.default_rng(10)
    for _ in range(100):
        d = rng.uniform(size=rng.integers(1, 500))
        x = rng.uniform(0, 1.1)
        assert p_x(d, x) == sum(1 for v in d if v <= x) / len(d)
    lo, hi = hpd_interval(rng.uniform(size=20_000))
    criterion.detail(f"HPD length {hi - lo:.4f}")
    assert abs((hi - lo) - 0.95) <= 0.02


def test_c11_determinism(criterion, tmp_path):
    criterion(11, "study twice with the same config gives byte-identical summary tables")
    base = dict(scenario="realistic", models=("AR1", "AR4"), replicates=1, master_seed=99)
    run_study(StudyConfig(**base, out_dir=str(tmp_path / "a")))
    run_study(StudyConfig(**base, out_dir=str(tmp_path / "b")))
    same = all(
        (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in ("summary.csv", "fits.csv")
    )
    criterion.detail("identical" if same else "differ")
    assert same
