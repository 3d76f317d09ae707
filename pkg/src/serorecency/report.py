"""Study report files: summary table, per-fit table, error-bar charts, density grids."""
from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

SUMMARY_COLUMNS = ["scenario", "model", "tau_truth", "X", "median", "q25", "q75", "n_used", "n_excluded", "n_failed", "missing"]
FIT_COLUMNS = ["replicate", "model", "scenario", "tau_truth", "X", "pX", "hpd_low", "hpd_high", "rhat", "ess", "converged", "error"]


def _num(x) -> str:
    x = float(x)
    return "NA" if math.isnan(x) else repr(x)


def safe_name(model: str) -> str:
    return model.replace("&", "_")


def ensure_writable(directory) -> Path:
    """Create ``directory`` if needed and prove it accepts files; raises ``OSError`` otherwise."""
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    fd, probe = tempfile.mkstemp(dir=path, prefix=".probe")
    os.close(fd)
    os.unlink(probe)
    return path


def summary_table(summary) -> str:
    buf = io.StringIO()
    buf.write(f"# quantiles: {summary.quantile_method} (numpy method='linear')\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in summary.rows:
        w.writerow(
            [r.scenario, r.model, _num(r.tau_truth), _num(r.x), _num(r.median), _num(r.q25), _num(r.q75),
             r.n_used, r.n_excluded, r.n_failed, int(r.missing)]
        )
    return buf.getvalue()


def fits_table(fits) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIT_COLUMNS)
    for f in fits:
        xs = sorted(f.p_x) if f.p_x else [math.nan]
        for x in xs:
            w.writerow(
                [f.replicate, f.model, f.scenario, _num(f.tau_truth), _num(x), _num(f.p_x.get(x, math.nan)),
                 _num(f.hpd95[0]), _num(f.hpd95[1]), _num(f.rhat), _num(f.ess), int(f.converged), f.error or ""]
            )
    return buf.getvalue()


def _chart(summary, scenario: str, path: Path) -> None:
    rows = [r for r in summary.rows if r.scenario == scenario]
    xs = sorted({r.x for r in rows})
    taus = sorted({r.tau_truth for r in rows})
    models = list(dict.fromkeys(r.model for r in rows))
    fig, axes = plt.subplots(1, len(xs), figsize=(4.0 * len(xs), 3.6), sharey=True, squeeze=False)
    width = 0.8 / max(len(models), 1)
    for ax, x in zip(axes[0], xs):
        for m_i, model in enumerate(models):
            pos, med, lo, hi = [], [], [], []
            for t_i, tau in enumerate(taus):
                cell = [r for r in rows if r.x == x and r.model == model and r.tau_truth == tau]
                if not cell or cell[0].missing:
                    continue
                c = cell[0]
                pos.append(t_i - 0.4 + width * (m_i + 0.5))
                med.append(c.median)
                lo.append(c.median - c.q25)
                hi.append(c.q75 - c.median)
            if pos:
                ax.errorbar(pos, med, yerr=[lo, hi], fmt="o", ms=3, capsize=2, label=model)
        ax.set_xticks(range(len(taus)))
        ax.set_xticklabels([f"{t:g}" for t in taus])
        ax.set_xlabel("true tau (years)")
        ax.set_title(f"P_X, X = {x * 12:.0f} months")
        ax.set_ylim(-0.02, 1.02)
    axes[0][0].set_ylabel("posterior probability")
    axes[0][-1].legend(fontsize="small")
    fig.tight_layout()
    with plt.rc_context({"svg.hashsalt": "serorecency", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def density_table(fits, model: str, scenario: str) -> str | None:
    """Pointwise mean posterior density over converged replicates, one column per true tau."""
    sel = [f for f in fits if f.model == model and f.scenario == scenario and f.density is not None and f.converged]
    if not sel:
        return None
    grid = sel[0].density[0]
    taus = sorted({f.tau_truth for f in sel})
    cols = []
    for tau in taus:
        dens = np.mean([f.density[1] for f in sel if f.tau_truth == tau], axis=0)
        cols.append(dens)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tau"] + [f"density_truth_{t!r}" for t in taus])
    for k, g in enumerate(grid):
        w.writerow([_num(g)] + [_num(c[k]) for c in cols])
    return buf.getvalue()


def emit_report(summary, out_dir, fits=None) -> list[Path]:
    """Write the report; returns the created paths in a fixed order."""
    out = ensure_writable(out_dir)
    written = []
    p = out / "summary.csv"
    p.write_text(summary_table(summary))
    written.append(p)
    if fits is not None:
        p = out / "fits.csv"
        p.write_text(fits_table(fits))
        written.append(p)
    for scen in dict.fromkeys(r.scenario for r in summary.rows):
        p = out / f"px_{scen}.svg"
        _chart(summary, scen, p)
        written.append(p)
        if fits is not None:
            for model in dict.fromkeys(r.model for r in summary.rows if r.scenario == scen):
                text = density_table(fits, model, scen)
                if text is None:
                    continue
                p = out / f"density_{scen}_{safe_name(model)}.csv"
                p.write_text(text)
                written.append(p)
    return written
