"""Report emission: delimited output plus rendered figures.

Every report path writes machine-readable CSV first and a matplotlib PNG
next to it; figures show the regret curve with its 99% confidence band on a
log horizon axis, or the per-repetition diagnostics of the estimator
suites.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .simulator import RegretReport, TrialResult
from .stattests import KdeRateSuiteResult, WeissmanSuiteResult


def write_report_csv(report: RegretReport, path) -> None:
    slope = "" if report.slope is None else f"{report.slope:.6f}"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "T",
                "mode",
                "fluid_value",
                "mean_regret",
                "ci99_halfwidth",
                "n_estimations",
                "n_trials",
                "slope_global",
            ]
        )
        for row in report.results:
            writer.writerow(
                [
                    row.T,
                    report.mode.value,
                    f"{row.fluid_value:.6f}",
                    f"{row.mean_regret:.6f}",
                    f"{row.ci99_halfwidth:.6f}",
                    report.n_estimations,
                    report.n_trials,
                    slope,
                ]
            )


def write_trajectory_csv(result: TrialResult, path) -> None:
    if result.trajectory is None:
        raise ValueError("trial was run without trajectory collection")
    n = result.final_budget.size
    header = ["t", "theta", "phi", "a", "reward"]
    header += [f"budget_after_{i + 1}" for i in range(n)]
    header += [f"rho_t_{i + 1}" for i in range(n)]
    header += ["lp_objective"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in result.trajectory:
            writer.writerow(
                [row.t, row.theta, f"{row.phi:.9f}", row.a, f"{row.reward:.9f}"]
                + [f"{b:.9f}" for b in row.budget_after]
                + [f"{r:.9f}" for r in row.rho_t]
                + [f"{row.lp_objective:.9f}"]
            )


def write_weissman_csv(result: WeissmanSuiteResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rep", "m", "l1_error", "threshold", "violated"])
        for row in result.rows:
            writer.writerow(
                [row.rep, row.m, f"{row.l1_error:.9f}", f"{row.threshold:.9f}", int(row.violated)]
            )


def write_kde_csv(result: KdeRateSuiteResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rep", "m", "sup_error"])
        for row in result.rows:
            writer.writerow([row.rep, row.m, f"{row.sup_error:.9f}"])


def figure_path(out_path) -> Path:
    return Path(out_path).with_suffix(".png")


def render_regret_figure(report: RegretReport, path) -> None:
    """Mean regret vs horizon with the 99% confidence band."""
    ts = [r.T for r in report.results]
    means = [r.mean_regret for r in report.results]
    cis = [r.ci99_halfwidth for r in report.results]
    lo = [m - c for m, c in zip(means, cis)]
    hi = [m + c for m, c in zip(means, cis)]

    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.fill_between(ts, lo, hi, alpha=0.25, label="99% CI")
    ax.plot(ts, means, marker="o", lw=1.5, label="mean regret")
    ax.set_xscale("log")
    ax.set_xlabel("horizon T")
    ax.set_ylabel("regret vs fluid benchmark")
    title = f"{report.mode.value} information"
    if report.slope is not None:
        title += f"  (log-log slope {report.slope:.2f})"
    ax.set_title(title)
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_weissman_figure(result: WeissmanSuiteResult, path) -> None:
    errs = [row.l1_error for row in result.rows]
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.hist(errs, bins=40, alpha=0.8)
    ax.axvline(result.threshold, color="crimson", ls="--", label="deviation threshold")
    ax.set_xlabel("L1 estimation error")
    ax.set_ylabel("repetitions")
    ax.set_title(
        f"frequency estimate deviations (a={result.support_size}, m={result.m}): "
        f"rate {result.violation_rate:.4f}"
    )
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_kde_figure(result: KdeRateSuiteResult, path) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    data = [
        [row.sup_error for row in result.rows if row.m == m] for m in result.sample_sizes
    ]
    ax.boxplot(data, tick_labels=[str(m) for m in result.sample_sizes])
    ax.set_xlabel("sample count m")
    ax.set_ylabel("sup-norm grid error")
    ax.set_title(f"KDE error vs sample count ({result.kernel} kernel)")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
