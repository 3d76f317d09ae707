"""Simulated biomarker panels: scenarios, random-effect draws and dataset files.

A dataset holds ``n_in_sample`` individuals with known seroconversion offset
``tau`` followed by the out-of-sample individuals whose ``tau`` is the
inference target. All times are years; ``tau`` is the time from
seroconversion to the first positive test and observation times ``t`` are
measured from that test.
"""
from __future__ import annotations

import csv
import json
import math
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError, InvalidCovarianceError, ParseError
from .growth import LINEAR, NONLINEAR3, VIRAL, GrowthModelSpec, eval_trajectory

IN_SAMPLE = "in_sample"
OUT_OF_SAMPLE = "out_of_sample"

TWO_WEEKS = 2.0 / 52.0
ONE_MONTH = 1.0 / 12.0

DEFAULT_IN_SCHEDULE = tuple(0.25 * j for j in range(9))
DEFAULT_OUT_SCHEDULE = (0.0, TWO_WEEKS, ONE_MONTH)
DEFAULT_OUT_TAUS = (0.014, 0.250, 0.500, 0.750, 0.986)

DATASET_MAGIC = "#serorecency-dataset v1"
CONFIG_SCHEMA = "serorecency-scenario/1"

IDEAL_VARIANCE = 0.01


def check_psd(cov) -> None:
    cov = np.asarray(cov, dtype=float)
    if cov.size == 0:
        return
    eig = np.linalg.eigvalsh(0.5 * (cov + cov.T))
    norm = np.linalg.norm(cov, 2)
    if eig[0] < -1e-8 * max(norm, 1e-300):
        raise InvalidCovarianceError(
            f"covariance is not positive semi-definite (smallest eigenvalue {eig[0]:.3g})"
        )


@dataclass(frozen=True)
class BiomarkerDef:
    label: str
    kind: str


@dataclass(frozen=True)
class Generator:
    """One generating model: a row of the parameter table.

    ``mean`` and ``cov`` cover the stacked parameter vector of all biomarkers
    (first biomarker's block, then the second's). ``error_var`` holds one
    measurement-error variance per biomarker.
    """

    name: str
    biomarkers: tuple[BiomarkerDef, ...]
    mean: tuple[float, ...]
    cov: tuple[tuple[float, ...], ...]
    error_var: tuple[float, ...]

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        dim = sum(GrowthModelSpec(b.kind).dimension for b in self.biomarkers)
        if mean.shape != (dim,) or cov.shape != (dim, dim):
            raise InvalidArgumentError(f"{self.name}: mean/cov shape does not match biomarkers")
        if len(self.error_var) != len(self.biomarkers):
            raise InvalidArgumentError(f"{self.name}: need one error variance per biomarker")
        if any(v <= 0 for v in self.error_var):
            raise InvalidArgumentError(f"{self.name}: error variances must be positive")
        if not np.allclose(cov, cov.T):
            raise InvalidCovarianceError(f"{self.name}: covariance is not symmetric")
        check_psd(cov)

    @property
    def mean_array(self) -> np.ndarray:
        return np.asarray(self.mean, dtype=float)

    @property
    def cov_array(self) -> np.ndarray:
        return np.asarray(self.cov, dtype=float)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(b.label for b in self.biomarkers)

    def growth_specs(self) -> tuple[GrowthModelSpec, ...]:
        """Growth specs with fixed-effect masks read off the zero diagonal."""
        diag = np.diag(self.cov_array)
        specs, pos = [], 0
        for b in self.biomarkers:
            d = GrowthModelSpec(b.kind).dimension
            specs.append(GrowthModelSpec(b.kind, tuple(diag[pos : pos + d] == 0.0)))
            pos += d
        return tuple(specs)

    def block_slices(self) -> list[slice]:
        out, pos = [], 0
        for b in self.biomarkers:
            d = GrowthModelSpec(b.kind).dimension
            out.append(slice(pos, pos + d))
            pos += d
        return out

    def marginal(self, labels: Sequence[str]) -> "Generator":
        """Sub-generator restricted to the given biomarkers (in that order)."""
        slices = dict(zip(self.labels, self.block_slices()))
        idx = np.concatenate([np.arange(slices[l].start, slices[l].stop) for l in labels])
        cov = self.cov_array[np.ix_(idx, idx)]
        ev = dict(zip(self.labels, self.error_var))
        bm = {b.label: b for b in self.biomarkers}
        return Generator(
            name="&".join(labels),
            biomarkers=tuple(bm[l] for l in labels),
            mean=tuple(self.mean_array[idx]),
            cov=_as_tuple_matrix(cov),
            error_var=tuple(ev[l] for l in labels),
        )


def _as_tuple_matrix(m) -> tuple[tuple[float, ...], ...]:
    return tuple(tuple(float(v) for v in row) for row in np.asarray(m, dtype=float))


def _gen(name, biomarkers, mean, cov, error_var):
    return Generator(
        name=name,
        biomarkers=tuple(BiomarkerDef(l, k) for l, k in biomarkers),
        mean=tuple(float(v) for v in mean),
        cov=_as_tuple_matrix(cov),
        error_var=tuple(float(v) for v in error_var),
    )


_AR2_COV = [[0, 0, 0], [0, 0.2, -0.085], [0, -0.085, 0.4]]
_AR4_COV = [[0, 0, 0], [0, 0.4, -0.147], [0, -0.147, 0.6]]

# realistic scenario; measurement error as variances (sd 0.1 -> 0.01 etc.)
TABLE1 = {
    "AR1": _gen("AR1", [("AR1", LINEAR)], (5, 2), [[0.5, -0.19], [-0.19, 0.2]], (0.1**2,)),
    "AR2": _gen("AR2", [("AR2", NONLINEAR3)], (0, -1, 1), _AR2_COV, (0.05**2,)),
    "AR3": _gen("AR3", [("AR3", NONLINEAR3)], (0, -1.5, 0.5), _AR2_COV, (0.05**2,)),
    "AR4": _gen("AR4", [("AR4", NONLINEAR3)], (1.5, -1.5, 0.8), _AR4_COV, (0.05**2,)),
    "VL": _gen("VL", [("VL", VIRAL)], (3, 2), [[1.0, 0.3536], [0.3536, 0.5]], (0.2**2,)),
    "AR1&AR4": _gen(
        "AR1&AR4",
        [("AR4", NONLINEAR3), ("AR1", LINEAR)],
        (1.5, -1.5, 0.8, 5, 2),
        [
            [0, 0, 0, 0, 0],
            [0, 0.4, -0.147, 0.045, -0.028],
            [0, -0.147, 0.6, -0.055, 0.173],
            [0, 0.045, -0.055, 0.5, -0.19],
            [0, -0.028, 0.173, -0.19, 0.2],
        ],
        (0.0025, 0.0100),
    ),
    "AR4&VL": _gen(
        "AR4&VL",
        [("AR4", NONLINEAR3), ("VL", VIRAL)],
        (1.5, -1.5, 0.8, 3, 2),
        [
            [0, 0, 0, 0, 0],
            [0, 0.4, -0.147, 0.063, 0.134],
            [0, -0.147, 0.6, 0.232, 0.055],
            [0, 0.063, 0.232, 1.0, 0.3536],
            [0, 0.134, 0.055, 0.3536, 0.5],
        ],
        (0.0025, 0.0400),
    ),
}


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "realistic"
    generators: dict = field(default_factory=lambda: dict(TABLE1))
    n_in_sample: int = 100
    out_of_sample_taus: tuple[float, ...] = DEFAULT_OUT_TAUS
    in_sample_schedule: tuple[float, ...] = DEFAULT_IN_SCHEDULE
    out_of_sample_schedule: tuple[float, ...] = DEFAULT_OUT_SCHEDULE
    sero_interval: float = 1.0
    master_seed: int = 20170101

    def __post_init__(self):
        if self.n_in_sample < 0:
            raise InvalidArgumentError("n_in_sample must be >= 0")
        if self.sero_interval <= 0:
            raise InvalidArgumentError("sero_interval must be positive")
        for sched in (self.in_sample_schedule, self.out_of_sample_schedule):
            s = np.asarray(sched, dtype=float)
            if s.size and (s[0] < 0 or np.any(np.diff(s) <= 0)):
                raise InvalidArgumentError("schedules must be nonnegative and strictly increasing")
        for tau in self.out_of_sample_taus:
            if not 0.0 <= tau <= self.sero_interval:
                raise InvalidArgumentError(f"out-of-sample tau {tau} outside [0, {self.sero_interval}]")

    def generator(self, name: str) -> Generator:
        try:
            return self.generators[name]
        except KeyError:
            raise InvalidArgumentError(
                f"unknown generating model {name!r}; known: {sorted(self.generators)}"
            ) from None


def realistic_config(**overrides) -> ScenarioConfig:
    return ScenarioConfig(name="realistic", **overrides)


def ideal_config(**overrides) -> ScenarioConfig:
    return ideal_from_realistic(realistic_config(**overrides))


def scenario_config(name: str, **overrides) -> ScenarioConfig:
    if name == "realistic":
        return realistic_config(**overrides)
    if name == "ideal":
        return ideal_config(**overrides)
    raise InvalidArgumentError(f"unknown scenario {name!r}")


def ideal_covariance(cov) -> np.ndarray:
    """Set every nonzero variance to 0.01 while keeping all correlations."""
    cov = np.asarray(cov, dtype=float)
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    live = sd > 0
    out = np.zeros_like(cov)
    idx = np.flatnonzero(live)
    corr = cov[np.ix_(idx, idx)] / np.outer(sd[idx], sd[idx])
    out[np.ix_(idx, idx)] = corr * IDEAL_VARIANCE
    out[idx, idx] = IDEAL_VARIANCE
    return out


def ideal_from_realistic(config: ScenarioConfig) -> ScenarioConfig:
    gens = {
        name: replace(g, cov=_as_tuple_matrix(ideal_covariance(g.cov_array)))
        for name, g in config.generators.items()
    }
    return replace(config, name="ideal", generators=gens)


def draw_random_effects(mean, cov, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw from N(mean, cov) where cov may have zero rows/columns.

    Coordinates with zero variance are returned equal to their mean exactly;
    the remaining principal block is factored by Cholesky.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    check_psd(cov)
    live = np.flatnonzero(np.diag(cov) > 0)
    n = 1 if size is None else size
    out = np.broadcast_to(mean, (n, mean.size)).copy()
    if live.size:
        block = cov[np.ix_(live, live)]
        try:
            chol = np.linalg.cholesky(block)
        except np.linalg.LinAlgError:
            # singular but PSD block: symmetric square root
            w, v = np.linalg.eigh(block)
            chol = v * np.sqrt(np.clip(w, 0.0, None))
        z = rng.standard_normal((n, live.size))
        out[:, live] += z @ chol.T
    return out[0] if size is None else out


@dataclass
class Individual:
    id: int
    role: str
    tau: float
    times: np.ndarray
    y: np.ndarray  # shape (n_biomarkers, n_obs)
    random_effects: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if self.y.shape[1] != self.times.size:
            raise InvalidArgumentError("measurement count differs from observation times")
        if self.random_effects is not None:
            self.random_effects = np.asarray(self.random_effects, dtype=float)

    @property
    def n_obs(self) -> int:
        return self.times.size

    def truncated(self, n_obs: int) -> "Individual":
        """Keep only the first ``n_obs`` observations."""
        return replace(self, times=self.times[:n_obs].copy(), y=self.y[:, :n_obs].copy())


@dataclass
class PanelDataset:
    scenario: str
    replicate: int
    generator: str
    biomarkers: tuple[BiomarkerDef, ...]
    individuals: list[Individual]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(b.label for b in self.biomarkers)

    @property
    def in_sample(self) -> list[Individual]:
        return [ind for ind in self.individuals if ind.role == IN_SAMPLE]

    @property
    def out_of_sample(self) -> list[Individual]:
        return [ind for ind in self.individuals if ind.role == OUT_OF_SAMPLE]

    def with_new_individual(self, index: int, n_obs: int | None = None) -> "PanelDataset":
        """All in-sample individuals plus the ``index``-th out-of-sample one."""
        new = self.out_of_sample[index]
        if n_obs is not None:
            new = new.truncated(n_obs)
        return replace(self, individuals=self.in_sample + [new])

    def select_biomarkers(self, labels: Sequence[str]) -> "PanelDataset":
        """Restrict measurements to the given biomarkers.

        Ground-truth random effects are sliced to the matching blocks.
        """
        pos = {b.label: k for k, b in enumerate(self.biomarkers)}
        rows = [pos[l] for l in labels]
        dims = [GrowthModelSpec(b.kind).dimension for b in self.biomarkers]
        starts = np.concatenate([[0], np.cumsum(dims)])
        cols = np.concatenate([np.arange(starts[k], starts[k + 1]) for k in rows]) if rows else []
        inds = [
            replace(
                ind,
                y=ind.y[rows],
                random_effects=None if ind.random_effects is None else ind.random_effects[cols],
            )
            for ind in self.individuals
        ]
        return replace(
            self,
            biomarkers=tuple(self.biomarkers[k] for k in rows),
            individuals=inds,
        )

    def __eq__(self, other):
        if not isinstance(other, PanelDataset):
            return NotImplemented
        if (self.scenario, self.replicate, self.generator, self.biomarkers) != (
            other.scenario,
            other.replicate,
            other.generator,
            other.biomarkers,
        ):
            return False
        if len(self.individuals) != len(other.individuals):
            return False
        for a, b in zip(self.individuals, other.individuals):
            if (a.id, a.role, a.tau) != (b.id, b.role, b.tau):
                return False
            if not (np.array_equal(a.times, b.times) and np.array_equal(a.y, b.y)):
                return False
            if (a.random_effects is None) != (b.random_effects is None):
                return False
            if a.random_effects is not None and not np.array_equal(a.random_effects, b.random_effects):
                return False
        return True


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Counter-based RNG stream: independent of the order streams are created in."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key)))


def generator_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def simulate_individual(
    generator: Generator,
    config: ScenarioConfig,
    role: str,
    tau: float,
    rng: np.random.Generator,
    noise_rngs: Sequence[np.random.Generator] | None = None,
    ident: int = 0,
) -> Individual:
    """Draw one individual's random effects and noisy measurements.

    ``rng`` supplies the random effects; ``noise_rngs`` (one per biomarker)
    supply measurement noise and default to ``rng``.
    """
    if not 0.0 <= tau <= config.sero_interval:
        raise InvalidArgumentError(f"tau {tau} outside [0, {config.sero_interval}]")
    if role == IN_SAMPLE:
        times = np.asarray(config.in_sample_schedule, dtype=float)
    elif role == OUT_OF_SAMPLE:
        times = np.asarray(config.out_of_sample_schedule, dtype=float)
    else:
        raise InvalidArgumentError(f"unknown role {role!r}")
    beta = draw_random_effects(generator.mean_array, generator.cov_array, rng)
    if noise_rngs is None:
        noise_rngs = [rng] * len(generator.biomarkers)
    y = np.empty((len(generator.biomarkers), times.size))
    for k, (spec, sl) in enumerate(zip(generator.growth_specs(), generator.block_slices())):
        mean = eval_trajectory(spec, beta[sl], tau, times)
        sd = math.sqrt(generator.error_var[k])
        y[k] = mean + sd * noise_rngs[k].standard_normal(times.size)
    return Individual(id=ident, role=role, tau=float(tau), times=times, y=y, random_effects=beta)


def simulate_dataset(config: ScenarioConfig, replicate: int, generator: str) -> PanelDataset:
    """One replicate panel for one generating model; deterministic in (seed, replicate)."""
    gen = config.generator(generator)
    gkey = generator_key(gen.name)
    n_bm = len(gen.biomarkers)
    individuals = []
    for i in range(config.n_in_sample):
        rng = stream(config.master_seed, gkey, replicate, i, 0)
        tau = rng.uniform(0.0, config.sero_interval)
        noise = [stream(config.master_seed, gkey, replicate, i, 1 + k) for k in range(n_bm)]
        individuals.append(simulate_individual(gen, config, IN_SAMPLE, tau, rng, noise, ident=i))
    for j, tau in enumerate(config.out_of_sample_taus):
        i = config.n_in_sample + j
        rng = stream(config.master_seed, gkey, replicate, i, 0)
        noise = [stream(config.master_seed, gkey, replicate, i, 1 + k) for k in range(n_bm)]
        individuals.append(simulate_individual(gen, config, OUT_OF_SAMPLE, tau, rng, noise, ident=i))
    return PanelDataset(
        scenario=config.name,
        replicate=replicate,
        generator=gen.name,
        biomarkers=gen.biomarkers,
        individuals=individuals,
    )


# --------------------------------------------------------------------------- files

_COLUMNS = ["replicate", "id", "role", "biomarker", "j", "t", "y", "tau_truth", "beta_truth"]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset(dataset: PanelDataset, path) -> None:
    """Write one row per (individual, biomarker, observation).

    Individuals without observations get a single row with empty ``j``/``t``/``y``.
    ``beta_truth`` holds that biomarker's block of ground-truth random effects.
    """
    path = Path(path)
    meta = {
        "scenario": dataset.scenario,
        "replicate": dataset.replicate,
        "generator": dataset.generator,
        "biomarkers": [[b.label, b.kind] for b in dataset.biomarkers],
    }
    dims = [GrowthModelSpec(b.kind).dimension for b in dataset.biomarkers]
    starts = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    with path.open("w", newline="") as fh:
        fh.write(DATASET_MAGIC + "\n")
        fh.write("#meta " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_COLUMNS)
        for ind in dataset.individuals:
            tau = "" if ind.tau is None else _fmt(ind.tau)
            for k, b in enumerate(dataset.biomarkers):
                if ind.random_effects is None:
                    beta = ""
                else:
                    beta = ";".join(_fmt(v) for v in ind.random_effects[starts[k] : starts[k + 1]])
                common = [dataset.replicate, ind.id, ind.role, b.label]
                if ind.n_obs == 0:
                    w.writerow(common + ["", "", "", tau, beta])
                for j in range(ind.n_obs):
                    w.writerow(common + [j, _fmt(ind.times[j]), _fmt(ind.y[k, j]), tau, beta])
            if not dataset.biomarkers:
                w.writerow([dataset.replicate, ind.id, ind.role, "", "", "", "", tau, ""])


def _parse_float(text, path, line, name):
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"cannot parse {text!r} as a number", path, line, name) from None


def read_dataset(path) -> PanelDataset:
    path = Path(path)
    with path.open(newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != DATASET_MAGIC:
        raise ParseError(f"missing header {DATASET_MAGIC!r}", path, 1)
    if len(lines) < 3 or not lines[1].startswith("#meta "):
        raise ParseError("missing #meta line", path, 2)
    try:
        meta = json.loads(lines[1][len("#meta ") :])
        biomarkers = tuple(BiomarkerDef(l, k) for l, k in meta["biomarkers"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"bad metadata: {exc}", path, 2) from None
    reader = csv.reader(lines[2:])
    header = next(reader)
    if header != _COLUMNS:
        raise ParseError(f"expected columns {_COLUMNS}, got {header}", path, 3)
    labels = [b.label for b in biomarkers]
    order: list[int] = []
    recs: dict[int, dict] = {}
    for lineno, row in enumerate(reader, start=4):
        if len(row) != len(_COLUMNS):
            raise ParseError(f"expected {len(_COLUMNS)} fields, got {len(row)}", path, lineno)
        rec = dict(zip(_COLUMNS, row))
        try:
            ident = int(rec["id"])
        except ValueError:
            raise ParseError(f"bad id {rec['id']!r}", path, lineno, "id") from None
        role = rec["role"]
        if role not in (IN_SAMPLE, OUT_OF_SAMPLE):
            raise ParseError(f"unknown role {role!r}", path, lineno, "role")
        if rec["tau_truth"] == "":
            raise ParseError("tau_truth is required", path, lineno, "tau_truth")
        tau = _parse_float(rec["tau_truth"], path, lineno, "tau_truth")
        if ident not in recs:
            order.append(ident)
            recs[ident] = {"role": role, "tau": tau, "obs": {l: {} for l in labels}, "beta": {}}
        r = recs[ident]
        if r["role"] != role or r["tau"] != tau:
            raise ParseError("inconsistent role/tau for individual", path, lineno)
        if not labels:
            continue
        label = rec["biomarker"]
        if label not in r["obs"]:
            raise ParseError(f"unknown biomarker {label!r}", path, lineno, "biomarker")
        if rec["beta_truth"]:
            r["beta"][label] = [
                _parse_float(v, path, lineno, "beta_truth") for v in rec["beta_truth"].split(";")
            ]
        if rec["j"] == "":
            continue
        try:
            j = int(rec["j"])
        except ValueError:
            raise ParseError(f"bad observation index {rec['j']!r}", path, lineno, "j") from None
        r["obs"][label][j] = (
            _parse_float(rec["t"], path, lineno, "t"),
            _parse_float(rec["y"], path, lineno, "y"),
        )
    individuals = []
    for ident in order:
        r = recs[ident]
        counts = {len(r["obs"][l]) for l in labels} or {0}
        if len(counts) != 1:
            raise ParseError(f"individual {ident}: biomarkers have different observation counts", path)
        n = counts.pop()
        times = None
        y = np.empty((len(labels), n))
        for k, l in enumerate(labels):
            obs = r["obs"][l]
            if sorted(obs) != list(range(n)):
                raise ParseError(f"individual {ident}: observation indices not 0..{n - 1}", path)
            t_l = np.array([obs[j][0] for j in range(n)])
            if times is None:
                times = t_l
            elif not np.array_equal(times, t_l):
                raise ParseError(f"individual {ident}: biomarkers observed at different times", path)
            y[k] = [obs[j][1] for j in range(n)]
        beta = None
        if r["beta"]:
            if set(r["beta"]) != set(labels):
                raise ParseError(f"individual {ident}: beta_truth missing for some biomarkers", path)
            beta = np.concatenate([r["beta"][l] for l in labels])
        individuals.append(
            Individual(
                id=ident,
                role=r["role"],
                tau=r["tau"],
                times=times if times is not None else np.empty(0),
                y=y,
                random_effects=beta,
            )
        )
    return PanelDataset(
        scenario=meta.get("scenario", ""),
        replicate=int(meta.get("replicate", 0)),
        generator=meta.get("generator", ""),
        biomarkers=biomarkers,
        individuals=individuals,
    )


def config_to_dict(config: ScenarioConfig) -> dict:
    return {
        "schema": CONFIG_SCHEMA,
        "name": config.name,
        "n_in_sample": config.n_in_sample,
        "out_of_sample_taus": list(config.out_of_sample_taus),
        "in_sample_schedule": list(config.in_sample_schedule),
        "out_of_sample_schedule": list(config.out_of_sample_schedule),
        "sero_interval": config.sero_interval,
        "master_seed": config.master_seed,
        "generators": {
            name: {
                "biomarkers": [[b.label, b.kind] for b in g.biomarkers],
                "mean": list(g.mean),
                "cov": [list(r) for r in g.cov],
                "error_var": list(g.error_var),
            }
            for name, g in config.generators.items()
        },
    }


def config_from_dict(data: dict) -> ScenarioConfig:
    if data.get("schema") != CONFIG_SCHEMA:
        raise ParseError(f"expected schema {CONFIG_SCHEMA!r}, got {data.get('schema')!r}")
    try:
        gens = {}
        for name, g in data["generators"].items():
            error_var = g["error_var"]
            if "error_cov" in g:
                # measurement errors must be independent across biomarkers
                ec = np.asarray(g["error_cov"], dtype=float)
                if np.any(ec - np.diag(np.diag(ec))):
                    raise InvalidArgumentError(f"{name}: measurement-error covariance must be diagonal")
                error_var = list(np.diag(ec))
            gens[name] = _gen(name, g["biomarkers"], g["mean"], g["cov"], error_var)
        return ScenarioConfig(
            name=data["name"],
            generators=gens,
            n_in_sample=int(data["n_in_sample"]),
            out_of_sample_taus=tuple(data["out_of_sample_taus"]),
            in_sample_schedule=tuple(data["in_sample_schedule"]),
            out_of_sample_schedule=tuple(data["out_of_sample_schedule"]),
            sero_interval=float(data["sero_interval"]),
            master_seed=int(data["master_seed"]),
        )
    except KeyError as exc:
        raise ParseError("missing config key", field=exc.args[0]) from None


def write_config(config: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(config), indent=2) + "\n")


def read_config(path) -> ScenarioConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno) from None
    return config_from_dict(data)
