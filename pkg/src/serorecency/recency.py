"""Recency estimands from posterior draws of the seroconversion offset."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientSamplesError, InvalidArgumentError
from .mcmc.diagnostics import effective_sample_size, split_rhat

DEFAULT_X = (2.0 / 12.0, 4.0 / 12.0, 6.0 / 12.0)
MIN_DRAWS = 20


def _draws(tau_draws) -> np.ndarray:
    d = np.asarray(tau_draws, dtype=float).ravel()
    if d.size == 0:
        raise InsufficientSamplesError("no draws")
    return d


def p_x(tau_draws, x: float) -> float:
    """Posterior probability that seroconversion happened at most ``x`` years before diagnosis."""
    if not x >= 0:
        raise InvalidArgumentError("X must be >= 0")
    d = _draws(tau_draws)
    return int(np.count_nonzero(d <= x)) / d.size


def hpd_interval(tau_draws, mass: float = 0.95) -> tuple[float, float]:
    """Shortest window of sorted draws holding ``ceil(mass * n)`` of them."""
    if not 0.0 < mass < 1.0:
        raise InvalidArgumentError("mass must lie in (0, 1)")
    d = np.sort(_draws(tau_draws))
    n = d.size
    if n < MIN_DRAWS:
        raise InsufficientSamplesError(f"HPD needs at least {MIN_DRAWS} draws, got {n}")
    k = math.ceil(mass * n)
    widths = d[k - 1 :] - d[: n - k + 1]
    i = int(np.argmin(widths))
    return float(d[i]), float(d[i + k - 1])


def posterior_density(tau_draws, grid_size: int = 201, support: tuple[float, float] = (0.0, 1.0)):
    """Reflected Gaussian KDE on ``support`` with Silverman's bandwidth.

    The bandwidth is floored at one grid spacing so the trapezoid rule on the
    returned grid still integrates to one for very concentrated posteriors.

    Returns
    -------
    (grid, density) : tuple of ndarray
    """
    d = _draws(tau_draws)
    if d.size < MIN_DRAWS:
        raise InsufficientSamplesError(f"density needs at least {MIN_DRAWS} draws, got {d.size}")
    if grid_size < 2:
        raise InvalidArgumentError("grid_size must be >= 2")
    lo, hi = support
    grid = np.linspace(lo, hi, grid_size)
    n = d.size
    sd = d.std(ddof=1)
    q75, q25 = np.percentile(d, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    h = max(0.9 * spread * n ** -0.2, grid[1] - grid[0])
    dens = np.zeros(grid_size)
    norm = 1.0 / (n * h * math.sqrt(2.0 * math.pi))
    for chunk in np.array_split(d, max(1, n // 4096)):
        for centre in (chunk, 2 * lo - chunk, 2 * hi - chunk):
            z = (grid[:, None] - centre[None, :]) / h
            dens += np.exp(-0.5 * z * z).sum(axis=1)
    return grid, dens * norm


@dataclass
class RecencySummary:
    p_x: dict[float, float]
    hpd95: tuple[float, float]
    density_grid: tuple[np.ndarray, np.ndarray]
    median: float
    n_draws: int
    rhat: float = math.nan
    rhat_diverged: bool = False
    ess: float = math.nan
    convergence_warning: bool = False
    tau_truth: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return not self.convergence_warning


def summarize(output, x_list=DEFAULT_X, mass: float = 0.95, grid_size: int = 201,
              rhat_threshold: float = 1.05, support: tuple[float, float] | None = None) -> RecencySummary:
    """Pool the retained draws of all chains into a recency summary.

    ``output`` is a ``ChainOutput`` or a (chains, draws) array. The split R-hat
    gate on the offset is evaluated with >= 2 chains; failing it (or having a
    single chain) sets ``convergence_warning``.
    """
    if hasattr(output, "tau"):
        chains = np.asarray(output.tau, dtype=float)
        model = getattr(output, "model", {}) or {}
        if support is None and "tau_lo" in model:
            support = (model["tau_lo"], model["tau_hi"])
        truth = (getattr(output, "dataset", {}) or {}).get("tau_truth")
    else:
        chains = np.asarray(output, dtype=float)
        truth = None
    if chains.ndim == 1:
        chains = chains[None, :]
    support = support or (0.0, 1.0)
    pooled = chains.ravel()
    if pooled.size == 0:
        raise InsufficientSamplesError("no draws")
    if chains.shape[0] >= 2 and chains.shape[1] >= 4:
        rh = split_rhat(chains)
        rhat, diverged = rh.value, rh.diverged
        warn = diverged or not rhat < rhat_threshold
    else:
        rhat, diverged, warn = math.nan, False, True
    ess = effective_sample_size(chains).value if chains.shape[1] >= 4 else math.nan
    return RecencySummary(
        p_x={float(x): p_x(pooled, x) for x in x_list},
        hpd95=hpd_interval(pooled, mass),
        density_grid=posterior_density(pooled, grid_size, support),
        median=float(np.median(pooled)),
        n_draws=int(pooled.size),
        rhat=rhat,
        rhat_diverged=diverged,
        ess=ess,
        convergence_warning=warn,
        tau_truth=truth,
    )
