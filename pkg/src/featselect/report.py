"""Figure rendering for experiment results: saved to files next to the CSV
output (headless backend, no display required)."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import ExperimentResult


def _finite_error_rows(result: ExperimentResult):
    return [r for r in result.rows if r.converged and math.isfinite(r.error)]


def _plot_error_vs_m(result: ExperimentResult, path: Path) -> None:
    per_m = [e for e in result.summary.get("per_m", []) if "trimmed_mean" in e]
    rows = _finite_error_rows(result)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(
        [r.m for r in rows], [r.error for r in rows],
        ".", color="0.7", markersize=4, label="trials",
    )
    if per_m:
        ms = [e["m"] for e in per_m]
        means = [e["trimmed_mean"] for e in per_m]
        ax.loglog(ms, means, "o-", color="C0", label="trimmed mean")
    bounds = sorted({(r.m, r.bound_value) for r in rows if math.isfinite(r.bound_value)})
    if bounds:
        ax.loglog(
            [b[0] for b in bounds], [b[1] for b in bounds],
            "--", color="C3", label="bound scale",
        )
    slope = result.summary.get("loglog_slope")
    title = result.summary.get("experiment", "")
    if slope is not None:
        title += f" (fitted slope {slope:.3f})"
    ax.set_title(title)
    ax.set_xlabel("samples m")
    ax.set_ylabel("selection error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _plot_epsilon_hist(result: ExperimentResult, path: Path) -> None:
    eps = [r.epsilon for r in result.rows if math.isfinite(r.epsilon)]
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.hist(eps, bins=30, color="C0", alpha=0.8)
    thresholds = {r.epsilon_star for r in result.rows if math.isfinite(r.epsilon_star)}
    for t in sorted(thresholds):
        ax.axvline(t, color="C3", linestyle="--", label=f"threshold {t:.3f}")
    ax.set_title(result.summary.get("experiment", ""))
    ax.set_xlabel("noise parameter")
    ax.set_ylabel("trials")
    if thresholds:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _plot_bound_comparison(result: ExperimentResult, path: Path) -> None:
    rows = result.rows
    idx = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.bar(idx - 0.2, [r.error for r in rows], width=0.4, label="estimate")
    ax.bar(idx + 0.2, [r.bound_value for r in rows], width=0.4, label="bound")
    ax.set_yscale("log")
    ax.set_title(result.summary.get("experiment", ""))
    ax.set_xlabel("case index")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_figures(result: ExperimentResult, stem) -> list[Path]:
    """Write the figures appropriate for this experiment kind; file names
    share `stem`. Returns the created paths."""
    stem = Path(stem)
    experiment = result.summary.get("experiment", "")
    paths = []
    if experiment in ("rate", "ms_recovery"):
        p = stem.with_name(stem.name + "_error_vs_m.png")
        _plot_error_vs_m(result, p)
        paths.append(p)
    if experiment in ("rate", "noise_bounds"):
        p = stem.with_name(stem.name + "_epsilon_hist.png")
        _plot_epsilon_hist(result, p)
        paths.append(p)
    if experiment in ("meanwidth_report", "model_params_report"):
        p = stem.with_name(stem.name + "_bounds.png")
        _plot_bound_comparison(result, p)
        paths.append(p)
    return paths
