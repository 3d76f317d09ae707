"""Convergence diagnostics: split R-hat and autocorrelation ESS."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..errors import InsufficientSamplesError

RHAT_SENTINEL = 1e10


class Rhat(NamedTuple):
    value: float
    diverged: bool


class Ess(NamedTuple):
    value: float
    zero_variance: bool


def _as_chains(draws) -> np.ndarray:
    x = np.asarray(draws, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise InsufficientSamplesError("draws must be (chains, draws)")
    return x


def split_rhat(draws) -> Rhat:
    """Split-chain potential scale reduction factor.

    Parameters
    ----------
    draws : array_like, shape (chains, n)
        At least 2 chains of at least 4 draws.

    Returns
    -------
    Rhat
        ``value`` is 1 when every half-chain is constant at the same level;
        disjoint constant halves give ``RHAT_SENTINEL`` with ``diverged`` set.
    """
    x = _as_chains(draws)
    m, n = x.shape
    if m < 2 or n < 4:
        raise InsufficientSamplesError("split R-hat needs >= 2 chains with >= 4 draws each")
    half = n // 2
    halves = np.concatenate([x[:, :half], x[:, n - half :]], axis=0)
    if np.all(halves.max(axis=1) == halves.min(axis=1)):
        if np.all(halves[:, 0] == halves[0, 0]):
            return Rhat(1.0, False)
        return Rhat(RHAT_SENTINEL, True)
    means = halves.mean(axis=1)
    w = halves.var(axis=1, ddof=1).mean()
    b_over_n = means.var(ddof=1)
    var_plus = (half - 1) / half * w + b_over_n
    return Rhat(float(np.sqrt(var_plus / w)), False)


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.size
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    return np.fft.irfft(f * np.conj(f), size)[:n] / n


def effective_sample_size(draws) -> Ess:
    """Multi-chain ESS with Geyer's initial monotone sequence truncation."""
    x = _as_chains(draws)
    m, n = x.shape
    if n < 4:
        raise InsufficientSamplesError("ESS needs >= 4 draws per chain")
    if np.all(x == x.flat[0]):
        return Ess(float(m * n), True)
    acov = np.stack([_autocov(c) for c in x])
    chain_var = acov[:, 0] * n / (n - 1)
    w = chain_var.mean()
    var_plus = w * (n - 1) / n + (x.mean(axis=1).var(ddof=1) if m > 1 else 0.0)
    if var_plus <= 0.0:
        return Ess(float(m * n), True)
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # pair sums, stop at the first non-positive pair, then force monotone decrease
    npairs = n // 2
    pairs = rho[: 2 * npairs].reshape(npairs, 2).sum(axis=1)
    stop = np.flatnonzero(pairs <= 0.0)
    pairs = pairs[: stop[0]] if stop.size else pairs
    pairs = np.minimum.accumulate(pairs)
    tau = -1.0 + 2.0 * pairs.sum()
    tau = max(tau, 1.0 / np.log10(m * n + 10))
    return Ess(float(m * n / tau), False)
