"""Command-line entry point: simulate, fit, recency, study, diagnose."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from .errors import InvalidArgumentError, ParseError, SeroRecencyError
from .mcmc.diagnostics import effective_sample_size, split_rhat
from .mcmc.sampler import SamplerConfig, read_chain_output, run_chain, write_chain_output
from .recency import summarize
from .report import ensure_writable, safe_name
from .simgen import TABLE1, read_config, read_dataset, scenario_config, simulate_dataset, write_config, write_dataset
from .study import MODELS, TRUNCATION, StudyConfig, model_spec_for, run_study

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _models(values) -> list[str]:
    out = []
    for v in values or []:
        out += [m for m in v.split(",") if m]
    for m in out:
        if m not in MODELS:
            raise UsageError(f"unknown model {m!r}; choose from {', '.join(MODELS)}")
    return out


def _sampler_args(p):
    g = p.add_argument_group("sampler")
    g.add_argument("--chains", type=int, default=4)
    g.add_argument("--iterations", type=int, default=20000)
    g.add_argument("--burn-in", type=int, default=10000)
    g.add_argument("--thin", type=int, default=5)
    g.add_argument("--adapt", type=int, default=5000, help="adaptation window (iterations)")
    g.add_argument("--backend", choices=["auto", "compiled", "python"], default="auto")


def _sampler_config(a, seed=0) -> SamplerConfig:
    try:
        return SamplerConfig(
            n_chains=a.chains, iterations=a.iterations, burn_in=a.burn_in, thin=a.thin,
            adapt_window=a.adapt, seed=seed, backend=a.backend,
        )
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="serorecency", description="Bayesian recency of infection from biomarker growth curves.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="write replicate datasets")
    s.add_argument("--scenario", choices=["realistic", "ideal"], default="realistic")
    s.add_argument("--config", help="scenario JSON file (overrides --scenario)")
    s.add_argument("--model", action="append", help="generating model(s); default all")
    s.add_argument("--replicates", type=int, default=1)
    s.add_argument("--seed", type=int, default=None, help="master seed")
    s.add_argument("--out", required=True)

    f = sub.add_parser("fit", help="fit a model to a dataset with one new individual")
    f.add_argument("dataset")
    f.add_argument("--model", help="model to fit; default: the dataset's generating model")
    f.add_argument("--individual", type=int, default=0, help="which out-of-sample individual")
    f.add_argument("--truncate-followup", choices=sorted(TRUNCATION), default="diagnosis")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--rhat", type=float, default=1.05, help="convergence gate on tau")
    f.add_argument("--out", required=True)
    _sampler_args(f)

    r = sub.add_parser("recency", help="summarize chain output")
    r.add_argument("chains")
    r.add_argument("--out", help="directory for summary and density files; default: print")

    st = sub.add_parser("study", help="run the replicate study")
    st.add_argument("--scenario", choices=["realistic", "ideal"], default="realistic")
    st.add_argument("--model", action="append", help="model(s) to fit; default all")
    st.add_argument("--replicates", type=int, default=20)
    st.add_argument("--seed", type=int, default=20170101, help="master seed")
    st.add_argument("--truncate-followup", choices=sorted(TRUNCATION), default="diagnosis")
    st.add_argument("--taus", help="comma-separated out-of-sample indices to fit; default all")
    st.add_argument("--source", action="append", default=[], metavar="MODEL=GENERATOR",
                    help="fit MODEL on the marginal of GENERATOR's datasets")
    st.add_argument("--workers", type=int, default=1)
    st.add_argument("--out", required=True)
    _sampler_args(st)

    d = sub.add_parser("diagnose", help="R-hat and ESS for every stored column")
    d.add_argument("chains")
    return p


def cmd_simulate(a) -> int:
    if a.replicates < 1:
        raise UsageError("--replicates must be >= 1")
    cfg = read_config(a.config) if a.config else scenario_config(a.scenario)
    if a.seed is not None:
        cfg = replace(cfg, master_seed=a.seed)
    models = _models(a.model) or list(cfg.generators)
    out = ensure_writable(a.out)
    write_config(cfg, out / "scenario.json")
    for rep in range(a.replicates):
        for m in models:
            ds = simulate_dataset(cfg, rep, m)
            write_dataset(ds, out / f"{cfg.name}_{safe_name(m)}_rep{rep:03d}.csv")
    print(f"wrote {a.replicates * len(models)} datasets to {out}")
    return EXIT_OK


def cmd_fit(a) -> int:
    sampler = _sampler_config(a, a.seed)
    ds = read_dataset(a.dataset)
    model = (_models([a.model]) or [None])[0] if a.model else ds.generator
    if model not in MODELS:
        raise UsageError(f"cannot infer model from dataset generator {model!r}; pass --model")
    if not ds.out_of_sample:
        raise InvalidArgumentError("dataset has no out-of-sample individual to fit")
    if model != ds.generator:
        ds = ds.select_biomarkers(TABLE1[model].labels)
    ds = ds.with_new_individual(a.individual, n_obs=TRUNCATION[a.truncate_followup])
    out = run_chain(ds, model_spec_for(model), sampler)
    out.dataset["model"] = model
    write_chain_output(out, a.out)
    s = summarize(out, rhat_threshold=a.rhat)
    print(f"tau: median {s.median:.4f}  95% HPD [{s.hpd95[0]:.4f}, {s.hpd95[1]:.4f}]  R-hat {s.rhat:.4f}")
    for x, p in s.p_x.items():
        print(f"P(tau <= {x:.4f}) = {p:.4f}")
    if s.convergence_warning:
        print(f"convergence gate failed (split R-hat {s.rhat:.4f} >= {a.rhat})", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def _recency_rows(out, s):
    info = out.dataset or {}
    rows = []
    for x, p in s.p_x.items():
        rows.append([info.get("replicate", ""), info.get("model", "&".join(out.labels)), info.get("scenario", ""),
                     repr(info.get("tau_truth")), repr(x), repr(p), repr(s.hpd95[0]), repr(s.hpd95[1]),
                     repr(s.rhat), repr(s.ess)])
    return rows


def cmd_recency(a) -> int:
    out = read_chain_output(a.chains)
    s = summarize(out)
    header = ["replicate", "model", "scenario", "tau_truth", "X", "pX", "hpd_low", "hpd_high", "rhat", "ess"]
    rows = _recency_rows(out, s)
    if a.out:
        d = ensure_writable(a.out)
        with (d / "recency.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        grid, dens = s.density_grid
        np.savetxt(d / "density.csv", np.column_stack([grid, dens]), delimiter=",", fmt="%.17g",
                   header="tau,density", comments="")
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    if s.convergence_warning:
        print(f"warning: convergence gate failed (split R-hat {s.rhat:.4f})", file=sys.stderr)
    return EXIT_OK


def cmd_study(a) -> int:
    models = _models(a.model) or list(MODELS)
    sources = []
    for item in a.source:
        if "=" not in item:
            raise UsageError(f"--source expects MODEL=GENERATOR, got {item!r}")
        sources.append(tuple(item.split("=", 1)))
    try:
        taus = tuple(int(t) for t in a.taus.split(",")) if a.taus else None
    except ValueError:
        raise UsageError(f"--taus expects comma-separated integers, got {a.taus!r}") from None
    try:
        cfg = StudyConfig(
            scenario=a.scenario, models=tuple(models), replicates=a.replicates,
            truncate_followup=a.truncate_followup, sampler=_sampler_config(a), out_dir=a.out,
            master_seed=a.seed, tau_indices=taus, sources=tuple(sources), workers=a.workers,
        )
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from None

    def progress(k, n, res):
        logging.getLogger("serorecency").info("fit %d/%d %s rep %d tau %.3f", k, n, res.model, res.replicate, res.tau_truth)

    res = run_study(cfg, progress)
    bad = sum(not f.converged for f in res.fits)
    print(f"{len(res.fits)} fits, {bad} excluded or failed; report in {a.out}")
    return EXIT_OK


def cmd_diagnose(a) -> int:
    out = read_chain_output(a.chains)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["parameter", "rhat", "diverged", "ess", "zero_variance"])
    for col in out.column_names():
        x = out.draws(col)
        rh = split_rhat(x) if x.shape[0] >= 2 else None
        es = effective_sample_size(x)
        w.writerow([col, repr(rh.value) if rh else "NA", int(rh.diverged) if rh else "NA",
                    repr(es.value), int(es.zero_variance)])
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "recency": cmd_recency, "study": cmd_study, "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return COMMANDS[a.command](a)
    except UsageError as exc:
        print(f"serorecency: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"serorecency: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SeroRecencyError as exc:
        print(f"serorecency: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"serorecency: I/O error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
