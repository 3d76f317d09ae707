import numpy as np
import pytest

from serorecency.errors import InsufficientSamplesError
from serorecency.mcmc.diagnostics import RHAT_SENTINEL, effective_sample_size, split_rhat


def test_constant_equal_chains():
    assert split_rhat(np.full((4, 100), 0.3)) == (1.0, False)


def test_disjoint_constant_chains():
    x = np.vstack([np.zeros(50), np.ones(50)])
    value, diverged = split_rhat(x)
    assert diverged and value == RHAT_SENTINEL


def test_iid_normal_rhat(rng):
    value, diverged = split_rhat(rng.standard_normal((4, 1000)))
    assert 0.99 <= value <= 1.02 and not diverged


def test_shifted_chains_flagged_by_value(rng):
    x = rng.standard_normal((4, 500))
    x[0] += 3.0
    assert split_rhat(x).value > 1.1


def test_rhat_preconditions():
    with pytest.raises(InsufficientSamplesError):
        split_rhat(np.zeros((1, 100)))
    with pytest.raises(InsufficientSamplesError):
        split_rhat(np.zeros((2, 3)))


def test_iid_ess(rng):
    value, flag = effective_sample_size(rng.standard_normal(1000))
    assert 800 <= value <= 1200 and not flag


def test_ar1_ess(rng):
    n, phi = 10_000, 0.9
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0] / np.sqrt(1 - phi**2)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + e[t]
    expected = n * (1 - phi) / (1 + phi)
    value, _ = effective_sample_size(x)
    assert abs(value - expected) <= 0.25 * expected


def test_constant_chain_flagged():
    value, flag = effective_sample_size(np.full(200, 2.0))
    assert flag and value == 200
