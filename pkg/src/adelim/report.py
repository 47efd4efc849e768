"""Report output: delimited series, a JSON summary, and rendered figures."""

from __future__ import annotations

import json
import os

import numpy as np

from .experiments import ExperimentReport

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def write_series(report: ExperimentReport, outdir: str, fmt: str = "csv") -> list[str]:
    """One file per named series, with a `t,value` header in csv mode."""
    paths = []
    for name, (t, v) in report.series.items():
        if fmt == "csv":
            path = os.path.join(outdir, f"series_{name}.csv")
            with open(path, "w") as fh:
                fh.write("t,value\n")
                for ti, vi in zip(t, v):
                    fh.write(f"{ti:.12g},{vi:.12g}\n")
        elif fmt == "json":
            path = os.path.join(outdir, f"series_{name}.json")
            with open(path, "w") as fh:
                json.dump({"t": list(map(float, t)), "value": list(map(float, v))},
                          fh, indent=1)
        else:
            raise ValueError(f"unknown series format {fmt!r}")
        paths.append(path)
    return paths


def write_report_json(report: ExperimentReport, outdir: str,
                      extra: dict | None = None) -> str:
    doc = report.to_dict()
    if extra:
        doc.update(extra)
    path = os.path.join(outdir, "report.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, default=float)
        fh.write("\n")
    return path


def _decorate(ax, xlabel, ylabel):
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)


def render_figure(report: ExperimentReport, outdir: str) -> str | None:
    """Render the experiment's headline figure next to the delimited output."""
    if not report.series:
        return None
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    name = report.experiment
    if name in ("prop-verify", "rabi-truncation", "equivalence"):
        for label, (t, v) in report.series.items():
            pos = v > 0
            ax.semilogy(t[pos], v[pos], lw=1.6, label=label)
            fit = report.fits.get(label)
            if fit is not None:
                tw = np.linspace(fit.window[0], fit.window[1], 50)
                ax.semilogy(tw, fit.predict(tw), "k--", lw=0.8)
        _decorate(ax, "t", "Frobenius norm")
    elif name == "choi":
        (t, v) = report.series["choi_min_eig"]
        ax.plot(t, v, lw=1.4, label="smallest Choi eigenvalue")
        ax.axhline(0.0, color="k", lw=0.6)
        _decorate(ax, "t", "eigenvalue")
    elif name == "laplace-compare":
        for label, (x, y) in report.series.items():
            ax.loglog(x, y, "o-", label=label)
            slope = report.scalars.get(f"exponent_{label.split('_', 2)[-1]}")
            if slope is not None:
                ax.annotate(f"slope {slope:.2f}", (x[-1], y[-1]),
                            textcoords="offset points", xytext=(-40, 6), fontsize=8)
        _decorate(ax, "coupling", "generator difference")
    else:
        for label, (t, v) in report.series.items():
            ax.plot(t, v, label=label)
        _decorate(ax, "t", "value")
    ax.set_title(name)
    fig.tight_layout()
    path = os.path.join(outdir, f"{name}.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def emit(report: ExperimentReport, outdir: str, fmt: str = "csv",
         figures: bool = True) -> dict:
    """Write all artifacts for a report; returns the written paths."""
    os.makedirs(outdir, exist_ok=True)
    series_paths = write_series(report, outdir, fmt)
    fig_path = render_figure(report, outdir) if figures else None
    extra = {
        "series_files": [os.path.basename(p) for p in series_paths],
        "figure": os.path.basename(fig_path) if fig_path else None,
    }
    json_path = write_report_json(report, outdir, extra)
    return {"series": series_paths, "figure": fig_path, "report": json_path}
