import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from serorecency.errors import InsufficientSamplesError, InvalidArgumentError
from serorecency.recency import hpd_interval, p_x, posterior_density, summarize

draws_st = st.lists(st.floats(0, 1), min_size=1, max_size=300)


def test_px_examples(rng):
    assert p_x([0.1, 0.2, 0.9], 0.333) == pytest.approx(2 / 3)
    assert p_x([0.1, 0.2, 0.9], 1.0) == 1.0
    assert p_x(rng.uniform(size=100_000), 0.167) == pytest.approx(0.167, abs=0.005)


def test_px_errors():
    with pytest.raises(InsufficientSamplesError):
        p_x([], 0.5)
    with pytest.raises(InvalidArgumentError):
        p_x([0.1], -0.1)


@given(d=draws_st, x=st.floats(0, 1.2))
def test_px_is_empirical_cdf(d, x):
    assert p_x(d, x) == sum(v <= x for v in d) / len(d)


def test_hpd_uniform(rng):
    lo, hi = hpd_interval(rng.uniform(size=20_000))
    assert hi - lo == pytest.approx(0.95, abs=0.02)


def test_hpd_point_mass():
    assert hpd_interval(np.full(50, 0.42)) == (0.42, 0.42)


def test_hpd_truncated_normal(rng):
    d = stats.truncnorm(-50, 50, loc=0.5, scale=0.01).rvs(50_000, random_state=rng)
    lo, hi = hpd_interval(d)
    assert lo == pytest.approx(0.5 - 0.0196, abs=0.005)
    assert hi == pytest.approx(0.5 + 0.0196, abs=0.005)


def test_hpd_needs_draws():
    with pytest.raises(InsufficientSamplesError):
        hpd_interval(np.linspace(0, 1, 19))
    with pytest.raises(InvalidArgumentError):
        hpd_interval(np.linspace(0, 1, 50), mass=1.0)


@given(loc=st.floats(0.2, 0.8), scale=st.floats(0.01, 0.1), seed=st.integers(0, 2**16))
def test_hpd_within_support_and_covers_median(loc, scale, seed):
    r = np.random.default_rng(seed)
    d = np.clip(r.normal(loc, scale, 2000), 0, 1)
    lo, hi = hpd_interval(d)
    assert 0 <= lo <= np.median(d) <= hi <= 1


def test_density_uniform_flat(rng):
    grid, dens = posterior_density(rng.uniform(size=100_000))
    assert np.max(np.abs(dens - 1)) < 0.15
    assert np.trapezoid(dens, grid) == pytest.approx(1, abs=0.01)


@pytest.mark.parametrize("scale", [0.001, 0.05, 0.3])
def test_density_normalised(rng, scale):
    d = np.abs(rng.normal(0, scale, 5000)) % 1.0
    grid, dens = posterior_density(d)
    assert np.trapezoid(dens, grid) == pytest.approx(1, abs=0.01)
    assert np.argmax(dens) == 0


def test_density_needs_draws():
    with pytest.raises(InsufficientSamplesError):
        posterior_density([0.5] * 5)


def test_summary_default_keys_and_step_cdf():
    s = summarize(np.full((1, 100), 0.3))
    assert sorted(round(x, 3) for x in s.p_x) == [0.167, 0.333, 0.5]
    assert list(s.p_x.values()) == [0.0, 1.0, 1.0]
    assert s.hpd95 == (0.3, 0.3) and s.median == 0.3 and s.n_draws == 100


def test_summary_flags_unconverged(rng):
    x = rng.uniform(size=(4, 500))
    x[0] = x[0] * 0.1
    s = summarize(x)
    assert s.convergence_warning and s.rhat > 1.05
    ok = summarize(rng.uniform(size=(4, 500)))
    assert not ok.convergence_warning and ok.converged


@given(seed=st.integers(0, 2**16), a=st.floats(0.3, 5), b=st.floats(0.3, 5))
def test_summary_monotone(seed, a, b):
    d = np.random.default_rng(seed).beta(a, b, size=(2, 200))
    s = summarize(d)
    p = list(s.p_x.values())
    assert p[0] <= p[1] <= p[2]
    lo, hi = s.hpd95
    assert 0 <= lo <= hi <= 1
