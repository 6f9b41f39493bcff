"""CSV, metadata, and figure emission for experiment results.

CSV files carry full float precision (17 significant digits) in a fixed row
order, so identical runs produce identical bytes; the per-step timing column
is the one non-reproducible field and is flagged as such in meta.json.
Figures are rendered with matplotlib and written as self-contained SVG.
"""

from __future__ import annotations

import json
import platform
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import __version__
from .experiments import ErrorTrace, McSummary, TimingSummary

TRACE_HEADER = "k,error_norm,lambda_min,r_max,step_ms"
MC_HEADER = "k,mean,ci_lo,ci_hi"
TIMING_HEADER = "estimator,phase,mean_ms,ci_lo_ms,ci_hi_ms"

NONDETERMINISTIC_COLUMNS = ["step_ms", "mean_ms", "ci_lo_ms", "ci_hi_ms"]

_RC = {
    "figure.figsize": (7.0, 4.5),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.fonttype": "path",
    "legend.fontsize": 9,
}


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _write_lines(path, header: str, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = "\n".join([header, *rows])
    path.write_text(body + "\n", encoding="ascii")


def write_trace_csv(trace: ErrorTrace, path) -> None:
    rows = (
        f"{int(k)},{_fmt(e)},{_fmt(lm)},{_fmt(rm)},{_fmt(ms)}"
        for k, e, lm, rm, ms in zip(trace.k, trace.error_norm, trace.lambda_min, trace.r_max, trace.step_ms)
    )
    _write_lines(path, TRACE_HEADER, rows)


def write_mc_csv(summary: McSummary, path) -> None:
    rows = (
        f"{int(k)},{_fmt(m)},{_fmt(lo)},{_fmt(hi)}"
        for k, m, lo, hi in zip(summary.k, summary.mean, summary.ci_lo, summary.ci_hi)
    )
    _write_lines(path, MC_HEADER, rows)


def write_timing_csv(summary: TimingSummary, path) -> None:
    rows = (
        f"{row.estimator},{row.phase},{_fmt(row.mean_ms)},{_fmt(row.ci_lo_ms)},{_fmt(row.ci_hi_ms)}"
        for row in summary.rows
    )
    _write_lines(path, TIMING_HEADER, rows)


def write_meta(out_dir, config: dict, *, seed: int, wall_time_s: float, overrides=None, extra=None) -> Path:
    """Reproducibility record; feeding it back as --config reruns the same job."""
    meta = {
        "config": config,
        "seed": seed,
        "library_version": __version__,
        "wall_time_s": wall_time_s,
        "overrides": list(overrides or []),
        "nondeterministic_columns": NONDETERMINISTIC_COLUMNS,
        "machine": {
            "platform": platform.platform(),
            "python": platform.python_version(),
            "machine_dependent_timings": True,
        },
    }
    if extra:
        meta.update(extra)
    path = Path(out_dir) / "meta.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def plot_error_traces(traces, labels, path, *, linestyles=None, logy=True, title=None) -> None:
    """Line chart of error norm versus step for one or more traces.

    linestyles lets callers mark data modes (solid = persistently exciting,
    dashed = excitation lost), mirroring the convergence-figure convention.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("no traces to plot")
    if len(labels) != len(traces):
        raise ValueError("labels must match traces")
    linestyles = linestyles or ["-"] * len(traces)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for trace, label, ls in zip(traces, labels, linestyles):
            err = np.maximum(trace.error_norm, 1e-17) if logy else trace.error_norm
            ax.plot(trace.k, err, ls, label=label, linewidth=1.4)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel("k")
        ax.set_ylabel("error norm")
        if title:
            ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg")
        plt.close(fig)


def plot_mc_summaries(summaries, path, *, logy=True, title=None) -> None:
    """Mean lines with shaded 95% intervals, one per estimator kind."""
    summaries = list(summaries)
    if not summaries:
        raise ValueError("no summaries to plot")
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for s in summaries:
            lo = np.maximum(s.ci_lo, 1e-17) if logy else s.ci_lo
            ax.plot(s.k, s.mean, label=s.kind, linewidth=1.4)
            ax.fill_between(s.k, lo, s.ci_hi, alpha=0.25)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel("k")
        ax.set_ylabel("mean error norm")
        if title:
            ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg")
        plt.close(fig)


def plot_timing(summary: TimingSummary, path, *, title=None) -> None:
    """Grouped bars of mean step time per estimator and phase, with 95% bars."""
    if not summary.rows:
        raise ValueError("no timing rows to plot")
    estimators = list(dict.fromkeys(row.estimator for row in summary.rows))
    phases = list(dict.fromkeys(row.phase for row in summary.rows))
    width = 0.8 / len(phases)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        xs = np.arange(len(estimators))
        for i, phase in enumerate(phases):
            means, errs = [], []
            for est in estimators:
                row = next(r for r in summary.rows if r.estimator == est and r.phase == phase)
                means.append(row.mean_ms)
                errs.append(row.mean_ms - row.ci_lo_ms)
            ax.bar(xs + (i - (len(phases) - 1) / 2) * width, means, width, yerr=errs, capsize=3, label=phase)
        ax.set_xticks(xs)
        ax.set_xticklabels(estimators)
        ax.set_ylabel("step time [ms]")
        if title:
            ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg")
        plt.close(fig)
