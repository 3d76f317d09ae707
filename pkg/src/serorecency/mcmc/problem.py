"""Flat array view of a dataset + model, shared by both sampler backends."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..bayes import ModelSpec
from ..errors import InvalidArgumentError
from ..growth import KIND_CODE
from ..simgen import OUT_OF_SAMPLE, PanelDataset

# Gibbs blocks; a sweep runs them in this order
MU = 1
SIGMA_BETA = 2
SIGMA_EPS = 4
FIXED = 8
BETA = 16
TAU = 32
JOINT = 64
INDEPENDENCE = 128
ALL_BLOCKS = MU | SIGMA_BETA | SIGMA_EPS | FIXED | BETA | TAU | JOINT | INDEPENDENCE
CONJUGATE_BLOCKS = MU | SIGMA_BETA | SIGMA_EPS

MAX_DIM = 8


@dataclass
class Problem:
    n: int
    kinds: np.ndarray  # int32 (K,)
    offsets: np.ndarray  # int32 (K + 1,)
    random_index: np.ndarray  # int32 (r,)
    fixed_index: np.ndarray  # int32 (f,)
    obs_start: np.ndarray  # int64 (n + 1,)
    obs_owner: np.ndarray  # int64 (N,)
    t: np.ndarray  # (N,)
    y: np.ndarray  # (K, N)
    tau: np.ndarray  # (n,) known offsets; the new individual's entry is ignored
    new_index: int
    tau_lo: float
    tau_hi: float
    mu_prior_var: float
    eps_shape: float
    eps_scale: float
    iw_df: float
    iw_scale: np.ndarray  # (r, r)

    @property
    def n_biomarkers(self) -> int:
        return int(self.kinds.size)

    @property
    def p(self) -> int:
        return int(self.offsets[-1])

    @property
    def r(self) -> int:
        return int(self.random_index.size)

    @property
    def f(self) -> int:
        return int(self.fixed_index.size)

    @property
    def n_obs(self) -> int:
        return int(self.t.size)


def build_problem(dataset: PanelDataset, model: ModelSpec) -> Problem:
    """Pack a dataset for sampling.

    At most one individual may be out-of-sample; its ``tau`` becomes the
    unknown. Without one, the model is fitted to the in-sample panel only.
    """
    if len(dataset.biomarkers) != model.n_biomarkers:
        raise InvalidArgumentError(
            f"dataset has {len(dataset.biomarkers)} biomarkers, model expects {model.n_biomarkers}"
        )
    for b, spec in zip(dataset.biomarkers, model.biomarkers):
        if b.kind != spec.kind:
            raise InvalidArgumentError(f"biomarker {b.label} is {b.kind}, model says {spec.kind}")
    inds = dataset.individuals
    new = [i for i, ind in enumerate(inds) if ind.role == OUT_OF_SAMPLE]
    if model.unknown_tau_index is not None and model.unknown_tau_index >= 0:
        new = [model.unknown_tau_index]
    if len(new) > 1:
        raise InvalidArgumentError("exactly one individual may have an unknown seroconversion time")
    if model.n_params > MAX_DIM:
        raise InvalidArgumentError(f"at most {MAX_DIM} growth parameters are supported")
    counts = np.array([ind.n_obs for ind in inds], dtype=np.int64)
    obs_start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    k = model.n_biomarkers
    t = np.concatenate([ind.times for ind in inds]) if inds else np.empty(0)
    y = np.concatenate([ind.y.reshape(k, -1) for ind in inds], axis=1) if inds else np.empty((k, 0))
    return Problem(
        n=len(inds),
        kinds=np.array([KIND_CODE[b.kind] for b in model.biomarkers], dtype=np.int32),
        offsets=np.array(model.offsets, dtype=np.int32),
        random_index=model.random_index.astype(np.int32),
        fixed_index=model.fixed_index.astype(np.int32),
        obs_start=obs_start,
        obs_owner=np.repeat(np.arange(len(inds), dtype=np.int64), counts),
        t=np.ascontiguousarray(t, dtype=float),
        y=np.ascontiguousarray(y, dtype=float),
        tau=np.array([ind.tau if ind.tau is not None else 0.0 for ind in inds], dtype=float),
        new_index=new[0] if new else -1,
        tau_lo=model.tau_lo,
        tau_hi=model.tau_hi,
        mu_prior_var=model.mu_prior_var,
        eps_shape=model.eps_shape,
        eps_scale=model.eps_scale,
        iw_df=model.df,
        iw_scale=np.ascontiguousarray(model.scale_matrix, dtype=float),
    )


@dataclass
class Tuning:
    """Proposal scales and adaptation accumulators; mutated in place by a kernel."""

    beta_logscale: np.ndarray  # (n,)
    beta_chol: np.ndarray  # (n, r, r)
    tau_logscale: np.ndarray  # (1,)
    fixed_logscale: np.ndarray  # (f,)
    joint_logscale: np.ndarray  # (1,)
    joint_chol: np.ndarray  # (r + 1, r + 1)
    beta_sum: np.ndarray  # (n, r)
    beta_outer: np.ndarray  # (n, r, r)
    joint_sum: np.ndarray  # (r + 1,)
    joint_outer: np.ndarray  # (r + 1, r + 1)
    # post-adaptation counters, one slot per block bit position (8 blocks)
    proposed: np.ndarray  # int64 (8,)
    accepted: np.ndarray  # int64 (8,)

    @classmethod
    def initial(cls, problem: Problem, step_beta=0.1, step_tau=0.1, step_fixed=0.05, step_joint=0.05):
        n, r, f = problem.n, problem.r, problem.f
        return cls(
            beta_logscale=np.full(n, np.log(step_beta)),
            beta_chol=np.tile(np.eye(r), (n, 1, 1)),
            tau_logscale=np.array([np.log(step_tau)]),
            fixed_logscale=np.full(f, np.log(step_fixed)),
            joint_logscale=np.array([np.log(step_joint)]),
            joint_chol=np.eye(r + 1),
            beta_sum=np.zeros((n, r)),
            beta_outer=np.zeros((n, r, r)),
            joint_sum=np.zeros(r + 1),
            joint_outer=np.zeros((r + 1, r + 1)),
            proposed=np.zeros(8, dtype=np.int64),
            accepted=np.zeros(8, dtype=np.int64),
        )


BLOCK_NAMES = ("mu", "sigma_beta", "sigma_eps", "fixed", "beta", "tau", "joint", "independence")


def block_slot(block: int) -> int:
    return int(block).bit_length() - 1
