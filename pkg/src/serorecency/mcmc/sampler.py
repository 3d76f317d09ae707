"""Multi-chain driver around the Metropolis-within-Gibbs kernel.

One sweep updates, in order: the random-coordinate means (conjugate normal),
the random-effects covariance (conjugate inverse-Wishart), the error
variances (conjugate inverse-gamma), the fixed-effect coordinates (scalar
random walk), each individual's random effects (vector random walk), the new
individual's ``tau`` (reflected random walk), ``(beta_new, tau)`` jointly
(adaptive random walk) and finally an independence proposal for
``(beta_new, tau)`` from the current population distribution.
"""
from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..bayes import ChainState, ModelSpec
from ..errors import InsufficientDataError, InvalidArgumentError, ParseError, SeroRecencyError
from ..growth import GrowthModelSpec, eval_trajectory
from ..simgen import IN_SAMPLE, PanelDataset
from ._pykernel import PyKernel
from .problem import ALL_BLOCKS, BLOCK_NAMES, Problem, Tuning, build_problem

try:
    from ._ckernel import CKernel
except ImportError:  # extension not built
    CKernel = None

log = logging.getLogger(__name__)

CHAIN_MAGIC = "#serorecency-chain v1"


def available_backends() -> list[str]:
    return ["python"] + (["compiled"] if CKernel is not None else [])


def default_backend() -> str:
    if os.environ.get("SERORECENCY_PURE_PYTHON") or CKernel is None:
        return "python"
    return "compiled"


def kernel_class(backend: str = "auto"):
    if backend == "auto":
        backend = default_backend()
    if backend == "python":
        return PyKernel
    if backend == "compiled":
        if CKernel is None:
            raise InvalidArgumentError("compiled kernel is not available in this installation")
        return CKernel
    raise InvalidArgumentError(f"unknown backend {backend!r}")


@dataclass(frozen=True)
class SamplerConfig:
    n_chains: int = 4
    iterations: int = 20000
    burn_in: int = 10000
    thin: int = 5
    adapt_window: int = 5000
    target_scalar: float = 0.44
    target_vector: float = 0.234
    step_beta: float = 0.1
    step_tau: float = 0.1
    step_fixed: float = 0.05
    step_joint: float = 0.05
    seed: int = 0
    store_random_effects: bool = False
    blocks: int = ALL_BLOCKS
    backend: str = "auto"

    def __post_init__(self):
        if self.n_chains < 1:
            raise InvalidArgumentError("need at least one chain")
        if not 0 <= self.burn_in < self.iterations:
            raise InvalidArgumentError("burn_in must be in [0, iterations)")
        if self.thin < 1:
            raise InvalidArgumentError("thin must be >= 1")
        if self.adapt_window < 0 or self.adapt_window > self.burn_in:
            raise InvalidArgumentError("adaptation window must end before burn-in does")
        for tgt in (self.target_scalar, self.target_vector):
            if not 0 < tgt < 1:
                raise InvalidArgumentError("target acceptance rates must lie in (0, 1)")

    @property
    def n_draws(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass
class ChainOutput:
    """Retained draws, stacked as (chain, draw, ...)."""

    parameter_names: list[str]
    random_names: list[str]
    labels: list[str]
    mu: np.ndarray
    sigma_beta: np.ndarray
    sigma2_eps: np.ndarray
    tau: np.ndarray
    beta_new: np.ndarray
    acceptance: dict[str, list[float]]
    seeds: list[dict]
    wall_time: list[float]
    backend: str
    config: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    dataset: dict = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)
    beta: np.ndarray | None = None

    @property
    def n_chains(self) -> int:
        return self.tau.shape[0]

    @property
    def n_draws(self) -> int:
        return self.tau.shape[1]

    def column_names(self) -> list[str]:
        names = ["tau_new"]
        names += [f"mu[{n}]" for n in self.parameter_names]
        r = len(self.random_names)
        names += [
            f"sigma_beta[{self.random_names[a]}|{self.random_names[b]}]" for a in range(r) for b in range(a, r)
        ]
        names += [f"sigma2_eps[{l}]" for l in self.labels]
        names += [f"beta_new[{n}]" for n in self.parameter_names]
        return names

    def chain_matrix(self, c: int) -> np.ndarray:
        r = len(self.random_names)
        iu = np.triu_indices(r)
        return np.column_stack(
            [
                self.tau[c],
                self.mu[c],
                self.sigma_beta[c][:, iu[0], iu[1]],
                self.sigma2_eps[c],
                self.beta_new[c],
            ]
        )

    def draws(self, column: str) -> np.ndarray:
        """(chain, draw) array of one named column."""
        cols = self.column_names()
        if column not in cols:
            raise InvalidArgumentError(f"unknown column {column!r}")
        j = cols.index(column)
        return np.stack([self.chain_matrix(c)[:, j] for c in range(self.n_chains)])


# --------------------------------------------------------------------------- initial state


def _individual_estimates(dataset: PanelDataset, model: ModelSpec) -> np.ndarray:
    rows = []
    for ind in dataset.individuals:
        if ind.role != IN_SAMPLE:
            continue
        if ind.n_obs < 2:
            raise InsufficientDataError(f"individual {ind.id} has fewer than 2 observations")
        est = []
        s = ind.times + ind.tau
        for k, spec in enumerate(model.biomarkers):
            y = ind.y[k]
            if spec.kind == "linear":
                slope, intercept = np.polyfit(s, y, 1)
                est += [intercept, slope]
            elif spec.kind == "nonlinear3":
                est += [y[-1], y[0], 0.0]
            else:
                est += [y[-1], 1.0]
        rows.append(est)
    return np.asarray(rows, dtype=float).reshape(len(rows), model.n_params)


def _default_params(model: ModelSpec) -> np.ndarray:
    base = {"linear": [0.0, 0.0], "nonlinear3": [0.0, 0.0, 0.0], "viral": [0.0, 1.0]}
    return np.concatenate([base[b.kind] for b in model.biomarkers])


def init_state(dataset: PanelDataset, model: ModelSpec, rng: np.random.Generator) -> ChainState:
    """Starting point built from per-individual curve heuristics.

    Linear blocks use per-individual least-squares lines; non-linear blocks use
    first/last observations as intercept/asymptote with unit rate. The mean is
    jittered uniformly within two between-individual SDs so chains start apart,
    then clipped to the range of the individual estimates.
    """
    est = _individual_estimates(dataset, model)
    if est.shape[0]:
        mu = est.mean(axis=0)
        sd = est.std(axis=0)
        lo, hi = est.min(axis=0), est.max(axis=0)
    else:
        mu = _default_params(model)
        sd = np.zeros_like(mu)
        lo = hi = mu
    # jitter for overdispersion, kept inside the range of individual estimates
    mu = np.clip(mu + rng.uniform(-2.0, 2.0, mu.size) * sd, lo, hi)
    n = len(dataset.individuals)
    beta = np.tile(mu, (n, 1))
    resid = [[] for _ in model.biomarkers]
    for ind in dataset.individuals:
        if ind.role != IN_SAMPLE:
            continue
        for k, spec in enumerate(model.biomarkers):
            g = eval_trajectory(spec, model.block(mu, k), ind.tau, ind.times)
            resid[k].append(ind.y[k] - g)
    sigma2 = np.empty(model.n_biomarkers)
    for k in range(model.n_biomarkers):
        if resid[k]:
            r = np.concatenate(resid[k])
            sigma2[k] = max(float(np.mean(r * r)), 1e-6) if np.all(np.isfinite(r)) else 1.0
        else:
            sigma2[k] = model.eps_scale / (model.eps_shape - 1.0) if model.eps_shape > 1 else model.eps_scale
    tau_new = rng.uniform(model.tau_lo, model.tau_hi)
    return ChainState(
        beta=beta,
        mu=mu.copy(),
        sigma_beta=np.eye(model.n_random),
        sigma2_eps=sigma2,
        tau_new=float(tau_new),
    )


# --------------------------------------------------------------------------- sweeps


def make_kernel(problem: Problem, state: ChainState, tuning: Tuning, rng, config: SamplerConfig | None = None):
    config = config or SamplerConfig()
    cls = kernel_class(config.backend)
    return cls(problem, state, tuning, rng, config.target_scalar, config.target_vector)


def gibbs_step(state: ChainState, dataset: PanelDataset | Problem, model: ModelSpec, rng: np.random.Generator,
               tuning: Tuning | None = None, blocks: int = ALL_BLOCKS, backend: str = "auto") -> ChainState:
    """One full sweep from ``state``; returns the new state (input untouched)."""
    problem = dataset if isinstance(dataset, Problem) else build_problem(dataset, model)
    new = state.copy()
    tuning = tuning or Tuning.initial(problem)
    kernel = kernel_class(backend)(problem, new, tuning, rng)
    kernel.run(1, blocks=blocks)
    return new


def _allocate(problem: Problem, n_draws: int, store_beta: bool) -> dict:
    out = {
        "mu": np.zeros((n_draws, problem.p)),
        "sigma_beta": np.zeros((n_draws, problem.r, problem.r)),
        "sigma2_eps": np.zeros((n_draws, problem.n_biomarkers)),
        "tau": np.zeros(n_draws),
        "beta_new": np.zeros((n_draws, problem.p)),
    }
    if store_beta:
        out["beta"] = np.zeros((n_draws, problem.n, problem.p))
    return out


def run_single_chain(problem: Problem, dataset: PanelDataset, model: ModelSpec, config: SamplerConfig,
                     seed_seq: np.random.SeedSequence, initial: ChainState | None = None):
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    state = initial.copy() if initial is not None else init_state(dataset, model, rng)
    tuning = Tuning.initial(problem, config.step_beta, config.step_tau, config.step_fixed, config.step_joint)
    kernel = make_kernel(problem, state, tuning, rng, config)
    out = _allocate(problem, config.n_draws, config.store_random_effects)
    kernel.run(
        config.iterations,
        start=0,
        adapt_window=config.adapt_window,
        burn_in=config.burn_in,
        thin=config.thin,
        blocks=config.blocks,
        out=out,
    )
    with np.errstate(invalid="ignore", divide="ignore"):
        rates = tuning.accepted / tuning.proposed
    return out, rates, kernel.backend


def model_description(model: ModelSpec, labels) -> dict:
    return {
        "biomarkers": [
            {"label": l, "kind": b.kind, "fixed_mask": list(b.fixed_mask)} for l, b in zip(labels, model.biomarkers)
        ],
        "tau_lo": model.tau_lo,
        "tau_hi": model.tau_hi,
        "mu_prior_var": model.mu_prior_var,
        "eps_shape": model.eps_shape,
        "eps_scale": model.eps_scale,
        "iw_df": model.df,
    }


def model_from_description(desc: dict) -> ModelSpec:
    return ModelSpec(
        biomarkers=tuple(GrowthModelSpec(b["kind"], tuple(b["fixed_mask"])) for b in desc["biomarkers"]),
        tau_lo=desc["tau_lo"],
        tau_hi=desc["tau_hi"],
        mu_prior_var=desc["mu_prior_var"],
        eps_shape=desc["eps_shape"],
        eps_scale=desc["eps_scale"],
    )


def run_chain(dataset: PanelDataset, model: ModelSpec, config: SamplerConfig | None = None,
              initial: list[ChainState] | None = None) -> ChainOutput:
    """Run ``config.n_chains`` independent chains; a failing chain does not stop the others."""
    config = config or SamplerConfig()
    problem = build_problem(dataset, model)
    labels = list(dataset.labels)
    names = model.parameter_names(labels)
    random_names = [names[j] for j in model.random_index]
    children = np.random.SeedSequence(config.seed).spawn(config.n_chains)
    results, seeds, times, failures = [], [], [], []
    backend = None
    for c, child in enumerate(children):
        seeds.append({"entropy": int(child.entropy), "spawn_key": list(child.spawn_key)})
        t0 = time.perf_counter()
        try:
            out, rates, backend = run_single_chain(
                problem, dataset, model, config, child, None if initial is None else initial[c]
            )
        except SeroRecencyError as exc:
            log.warning("chain %d failed: %s", c, exc)
            failures.append({"chain": c, "error": str(exc)})
            times.append(time.perf_counter() - t0)
            continue
        times.append(time.perf_counter() - t0)
        results.append((out, rates))
    if not results:
        raise SeroRecencyError(f"all {config.n_chains} chains failed: {failures}")
    acceptance = {name: [float(r[j]) for _, r in results] for j, name in enumerate(BLOCK_NAMES)}
    new_ind = [ind for ind in dataset.individuals if ind.role != IN_SAMPLE]
    info = {
        "scenario": dataset.scenario,
        "generator": dataset.generator,
        "replicate": dataset.replicate,
        "n_individuals": len(dataset.individuals),
        "new_id": new_ind[0].id if new_ind else None,
        "tau_truth": new_ind[0].tau if new_ind else None,
    }
    stack = lambda key: np.stack([o[key] for o, _ in results])  # noqa: E731
    return ChainOutput(
        parameter_names=names,
        random_names=random_names,
        labels=labels,
        mu=stack("mu"),
        sigma_beta=stack("sigma_beta"),
        sigma2_eps=stack("sigma2_eps"),
        tau=stack("tau"),
        beta_new=stack("beta_new"),
        acceptance=acceptance,
        seeds=seeds,
        wall_time=times,
        backend=backend,
        config=asdict(config),
        model=model_description(model, labels),
        dataset=info,
        failures=failures,
        beta=stack("beta") if config.store_random_effects else None,
    )


# --------------------------------------------------------------------------- files


def write_chain_output(output: ChainOutput, directory) -> None:
    """One CSV per chain (header = canonical column order) plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = ",".join(output.column_names())
    files = []
    for c in range(output.n_chains):
        name = f"chain_{c}.csv"
        np.savetxt(directory / name, output.chain_matrix(c), delimiter=",", fmt="%.17g",
                   header=f"{CHAIN_MAGIC}\n{header}", comments="")
        files.append(name)
    manifest = {
        "schema": "serorecency-chains/1",
        "files": files,
        "parameter_names": output.parameter_names,
        "random_names": output.random_names,
        "labels": output.labels,
        "acceptance": output.acceptance,
        "seeds": output.seeds,
        "wall_time": output.wall_time,
        "backend": output.backend,
        "config": output.config,
        "model": output.model,
        "dataset": output.dataset,
        "failures": output.failures,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_chain_output(directory) -> ChainOutput:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
    except FileNotFoundError:
        raise ParseError("missing manifest.json", directory) from None
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, directory / "manifest.json", exc.lineno) from None
    if manifest.get("schema") != "serorecency-chains/1":
        raise ParseError("unexpected manifest schema", directory / "manifest.json")
    p = len(manifest["parameter_names"])
    r = len(manifest["random_names"])
    K = len(manifest["labels"])
    mats = []
    for name in manifest["files"]:
        path = directory / name
        with path.open() as fh:
            first = fh.readline().strip()
            if first != CHAIN_MAGIC:
                raise ParseError(f"missing header {CHAIN_MAGIC!r}", path, 1)
            cols = fh.readline().strip().split(",")
        try:
            mat = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
        except ValueError as exc:
            raise ParseError(str(exc), path) from None
        if mat.shape[1] != len(cols):
            raise ParseError("row width differs from header", path)
        mats.append(mat)
    ntri = r * (r + 1) // 2
    iu = np.triu_indices(r)
    tau, mu, sig, s2, bnew = [], [], [], [], []
    for mat in mats:
        pos = 0
        tau.append(mat[:, 0])
        pos = 1
        mu.append(mat[:, pos : pos + p])
        pos += p
        tri = mat[:, pos : pos + ntri]
        pos += ntri
        full = np.zeros((mat.shape[0], r, r))
        full[:, iu[0], iu[1]] = tri
        full[:, iu[1], iu[0]] = tri
        sig.append(full)
        s2.append(mat[:, pos : pos + K])
        pos += K
        bnew.append(mat[:, pos : pos + p])
    return ChainOutput(
        parameter_names=manifest["parameter_names"],
        random_names=manifest["random_names"],
        labels=manifest["labels"],
        mu=np.stack(mu),
        sigma_beta=np.stack(sig),
        sigma2_eps=np.stack(s2),
        tau=np.stack(tau),
        beta_new=np.stack(bnew),
        acceptance=manifest["acceptance"],
        seeds=manifest["seeds"],
        wall_time=manifest["wall_time"],
        backend=manifest["backend"],
        config=manifest["config"],
        model=manifest["model"],
        dataset=manifest["dataset"],
        failures=manifest["failures"],
    )
