"""Replicate simulation study: simulate, fit each model per new individual, aggregate."""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bayes import ModelSpec
from .errors import InvalidArgumentError, SeroRecencyError
from .mcmc.sampler import SamplerConfig, run_chain
from .recency import DEFAULT_X, summarize
from .simgen import TABLE1, PanelDataset, generator_key, scenario_config, simulate_dataset

log = logging.getLogger(__name__)

MODELS = tuple(TABLE1)
TRUNCATION = {"diagnosis": 1, "2weeks": 2, "1month": 3}


@dataclass(frozen=True)
class StudyConfig:
    """One study run.

    ``sources`` maps a fitted model to the generating model whose datasets it
    is fitted on (marginal biomarkers are selected automatically). By default
    each model is fitted to data simulated from its own generator.
    ``tau_indices`` restricts the fits to some out-of-sample individuals.
    """

    scenario: str = "realistic"
    models: tuple[str, ...] = MODELS
    replicates: int = 20
    truncate_followup: str = "diagnosis"
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    out_dir: str | None = None
    master_seed: int = 20170101
    tau_indices: tuple[int, ...] | None = None
    sources: tuple[tuple[str, str], ...] = ()
    x_list: tuple[float, ...] = DEFAULT_X
    rhat_threshold: float = 1.05
    workers: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise InvalidArgumentError("replicate count must be >= 1")
        if not self.models:
            raise InvalidArgumentError("model list must be non-empty")
        for m in self.models:
            if m not in MODELS:
                raise InvalidArgumentError(f"unknown model {m!r}; supported: {', '.join(MODELS)}")
        if self.truncate_followup not in TRUNCATION:
            raise InvalidArgumentError(f"truncation must be one of {sorted(TRUNCATION)}")
        for model, gen in self.sources:
            if model not in MODELS or gen not in MODELS:
                raise InvalidArgumentError(f"bad source mapping {model}={gen}")
            if not set(TABLE1[model].labels) <= set(TABLE1[gen].labels):
                raise InvalidArgumentError(f"{gen} data has no {model} biomarkers")
        if self.workers < 1:
            raise InvalidArgumentError("workers must be >= 1")

    def source(self, model: str) -> str:
        return dict(self.sources).get(model, model)


@dataclass
class FitResult:
    scenario: str
    model: str
    replicate: int
    tau_index: int
    tau_truth: float
    p_x: dict[float, float] = field(default_factory=dict)
    hpd95: tuple[float, float] = (math.nan, math.nan)
    median: float = math.nan
    rhat: float = math.nan
    ess: float = math.nan
    converged: bool = False
    error: str | None = None
    density: tuple | None = None
    acceptance: dict | None = None

    @property
    def hpd_width(self) -> float:
        return self.hpd95[1] - self.hpd95[0]


@dataclass
class SummaryRow:
    scenario: str
    model: str
    tau_truth: float
    x: float
    median: float
    q25: float
    q75: float
    n_used: int
    n_excluded: int
    n_failed: int

    @property
    def missing(self) -> bool:
        return self.n_used == 0


@dataclass
class StudySummary:
    rows: list[SummaryRow]
    quantile_method: str = "inclusive linear interpolation"

    def cell(self, model: str, tau_truth: float, x: float, scenario: str | None = None) -> SummaryRow:
        for r in self.rows:
            if (
                r.model == model
                and math.isclose(r.tau_truth, tau_truth, abs_tol=1e-12)
                and math.isclose(r.x, x, abs_tol=1e-12)
                and (scenario is None or r.scenario == scenario)
            ):
                return r
        raise KeyError((model, tau_truth, x))


@dataclass
class StudyResult:
    config: StudyConfig
    fits: list[FitResult]
    summary: StudySummary


def model_spec_for(name: str) -> ModelSpec:
    return ModelSpec(biomarkers=tuple(TABLE1[name].growth_specs()))


def fit_seed(master_seed: int, model: str, replicate: int, tau_index: int) -> int:
    ss = np.random.SeedSequence(master_seed, spawn_key=(generator_key(model), replicate, tau_index))
    return int(ss.generate_state(1, np.uint32)[0])


def fit_dataset(dataset: PanelDataset, model: str, sampler: SamplerConfig, x_list=DEFAULT_X,
                rhat_threshold: float = 1.05, tau_index: int = 0) -> FitResult:
    """Fit one model to a dataset holding exactly one new individual."""
    new = dataset.out_of_sample[0]
    res = FitResult(dataset.scenario, model, dataset.replicate, tau_index, new.tau)
    try:
        out = run_chain(dataset, model_spec_for(model), sampler)
        s = summarize(out, x_list, rhat_threshold=rhat_threshold)
    except SeroRecencyError as exc:
        log.warning("fit %s rep %d tau %d failed: %s", model, dataset.replicate, tau_index, exc)
        res.error = str(exc)
        return res
    res.p_x = s.p_x
    res.hpd95 = s.hpd95
    res.median = s.median
    res.rhat = s.rhat
    res.ess = s.ess
    res.converged = s.converged
    res.density = s.density_grid
    res.acceptance = out.acceptance
    return res


def _fit_task(args):
    return fit_dataset(*args)


def plan_fits(config: StudyConfig):
    """The (dataset, model, sampler) grid, in deterministic order."""
    scen = scenario_config(config.scenario, master_seed=config.master_seed)
    n_obs = TRUNCATION[config.truncate_followup]
    indices = config.tau_indices
    if indices is None:
        indices = tuple(range(len(scen.out_of_sample_taus)))
    cache: dict[tuple[str, int], PanelDataset] = {}
    tasks = []
    for rep in range(config.replicates):
        for model in config.models:
            gen = config.source(model)
            key = (gen, rep)
            if key not in cache:
                cache[key] = simulate_dataset(scen, rep, gen)
            full = cache[key]
            if gen != model:
                full = full.select_biomarkers(TABLE1[model].labels)
            for j in indices:
                ds = full.with_new_individual(j, n_obs=n_obs)
                sampler = replace(config.sampler, seed=fit_seed(config.master_seed, model, rep, j))
                tasks.append((ds, model, sampler, config.x_list, config.rhat_threshold, j))
        cache = {k: v for k, v in cache.items() if k[1] == rep}
    return tasks


def aggregate(fits: list[FitResult], x_list=DEFAULT_X, models=None) -> StudySummary:
    """Median and inclusive quartiles of P_X per (scenario, model, tau truth, X).

    Fits that errored or failed the convergence gate are counted but excluded.
    """
    models = list(models) if models is not None else list(dict.fromkeys(f.model for f in fits))
    scenarios = list(dict.fromkeys(f.scenario for f in fits))
    rows = []
    for scen in scenarios:
        for model in models:
            cell_fits = [f for f in fits if f.scenario == scen and f.model == model]
            for tau in sorted({f.tau_truth for f in cell_fits}):
                group = [f for f in cell_fits if f.tau_truth == tau]
                failed = sum(f.error is not None for f in group)
                used = [f for f in group if f.error is None and f.converged]
                excluded = len(group) - failed - len(used)
                for x in x_list:
                    vals = np.array([f.p_x[float(x)] for f in used])
                    if vals.size:
                        q25, med, q75 = np.quantile(vals, [0.25, 0.5, 0.75], method="linear")
                    else:
                        q25 = med = q75 = math.nan
                    rows.append(
                        SummaryRow(scen, model, float(tau), float(x), float(med), float(q25), float(q75),
                                   len(used), excluded, failed)
                    )
    return StudySummary(rows)


def run_study(config: StudyConfig, progress=None) -> StudyResult:
    """Run every planned fit, aggregate, and (if ``out_dir`` is set) write the report."""
    from .report import emit_report, ensure_writable

    if config.out_dir is not None:
        ensure_writable(config.out_dir)
    tasks = plan_fits(config)
    fits: list[FitResult] = []
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=min(config.workers, os.cpu_count() or 1)) as pool:
            for k, res in enumerate(pool.map(_fit_task, tasks)):
                fits.append(res)
                if progress:
                    progress(k + 1, len(tasks), res)
    else:
        for k, task in enumerate(tasks):
            res = _fit_task(task)
            fits.append(res)
            if progress:
                progress(k + 1, len(tasks), res)
    summary = aggregate(fits, config.x_list, config.models)
    result = StudyResult(config, fits, summary)
    if config.out_dir is not None:
        emit_report(summary, Path(config.out_dir), fits)
    return result
