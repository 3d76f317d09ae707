"""Mean biomarker trajectories as a function of time since seroconversion.

All times are in years. Parameter vectors follow the subscript order of the
growth curves:

* linear      ``(intercept, slope)``
* nonlinear3  ``(asymptote, intercept, log_rate)``
* viral       ``(plateau, decay_rate)``
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidArgumentError

LINEAR = "linear"
NONLINEAR3 = "nonlinear3"
VIRAL = "viral"

KIND_DIMENSION = {LINEAR: 2, NONLINEAR3: 3, VIRAL: 2}
# integer codes shared with the compiled kernel
KIND_CODE = {LINEAR: 0, NONLINEAR3: 1, VIRAL: 2}


class LinearParams(NamedTuple):
    intercept: float
    slope: float


class Nonlinear3Params(NamedTuple):
    asymptote: float
    intercept: float
    log_rate: float


class ViralDecayParams(NamedTuple):
    plateau: float
    decay_rate: float


@dataclass(frozen=True)
class GrowthModelSpec:
    """Functional form of one biomarker plus which coordinates are fixed effects.

    ``fixed_mask[j]`` is True when coordinate ``j`` has zero between-individual
    variance and is shared by everyone.
    """

    kind: str
    fixed_mask: tuple[bool, ...] = ()

    def __post_init__(self):
        if self.kind not in KIND_DIMENSION:
            raise InvalidArgumentError(f"unknown growth model kind {self.kind!r}")
        mask = tuple(bool(m) for m in self.fixed_mask) or (False,) * KIND_DIMENSION[self.kind]
        if len(mask) != KIND_DIMENSION[self.kind]:
            raise InvalidArgumentError(
                f"{self.kind} needs a mask of length {KIND_DIMENSION[self.kind]}, got {len(mask)}"
            )
        object.__setattr__(self, "fixed_mask", mask)

    @property
    def dimension(self) -> int:
        return KIND_DIMENSION[self.kind]

    @property
    def n_random(self) -> int:
        return self.dimension - sum(self.fixed_mask)


@dataclass(frozen=True)
class BivariateSpec:
    first: GrowthModelSpec
    second: GrowthModelSpec

    @property
    def components(self) -> tuple[GrowthModelSpec, GrowthModelSpec]:
        return (self.first, self.second)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise InvalidArgumentError("non-finite input")


def _check_time(s):
    s = np.asarray(s, dtype=float)
    if np.any(np.isnan(s)):
        raise InvalidArgumentError("non-finite time")
    if np.any(s < 0):
        raise InvalidArgumentError("time since seroconversion must be >= 0")
    return s


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def eval_linear(p: Sequence[float], s):
    b1, b2 = p
    _check_finite(b1, b2)
    s = _check_time(s)
    _check_finite(s)
    return _scalar_or_array(b1 + b2 * s)


def eval_nonlinear3(p: Sequence[float], s):
    b1, b2, b3 = p
    _check_finite(b1, b2, b3)
    s = _check_time(s)
    with np.errstate(over="ignore", invalid="ignore"):
        rate = np.exp(b3)
        # rate may overflow to inf; the curve is then at its asymptote for s > 0
        arg = np.where(s > 0, rate * s, 0.0)
        out = b1 + (b2 - b1) * np.exp(-arg)
    return _scalar_or_array(out)


def eval_viral(p: Sequence[float], s):
    b1, b2 = p
    _check_finite(b1, b2)
    s = _check_time(s)
    with np.errstate(over="ignore"):
        out = b1 * (1.0 + np.exp(-b2 * s))
    return _scalar_or_array(out)


_EVALUATORS = {LINEAR: eval_linear, NONLINEAR3: eval_nonlinear3, VIRAL: eval_viral}


def eval_trajectory(spec: GrowthModelSpec, beta, tau: float, times) -> np.ndarray:
    """Evaluate ``g(t_j + tau, beta)`` for each observation time ``t_j``."""
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.size != spec.dimension:
        raise InvalidArgumentError(
            f"{spec.kind} expects {spec.dimension} parameters, got {beta.size}"
        )
    times = np.asarray(times, dtype=float).ravel()
    if times.size and np.any(times < 0):
        raise InvalidArgumentError("observation times must be >= 0")
    return np.atleast_1d(np.asarray(_EVALUATORS[spec.kind](beta, times + tau), dtype=float))


def eval_bivariate(spec: BivariateSpec, beta1, beta2, tau: float, times) -> np.ndarray:
    """Stack both biomarkers' trajectories: first block, then second block."""
    return np.concatenate(
        [
            eval_trajectory(spec.first, beta1, tau, times),
            eval_trajectory(spec.second, beta2, tau, times),
        ]
    )
