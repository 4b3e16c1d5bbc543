"""Command-line front end.

Two subcommands:

* ``run`` executes a Monte-Carlo regret experiment from a config file, a
  bundled preset, or an instance file, writing the report CSV, a rendered
  regret figure next to it, and (optionally) per-round trajectory logs.
* ``esttest`` runs the estimator statistical suites (``weissman`` for the
  discrete L1 concentration check, ``kde-rate`` for the KDE error-rate
  direction) and writes per-repetition CSVs plus a figure.

Exit codes: 0 on success, 1 when a statistical suite or report invariant
fails, 2 on usage or config errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import (
    DEFAULT_HORIZONS,
    PAPER_HORIZONS,
    ConfigError,
    ExperimentConfig,
    load_config,
)
from .estimators import KERNELS
from .policy import FeedbackMode
from .reporting import (
    figure_path,
    render_kde_figure,
    render_regret_figure,
    render_weissman_figure,
    write_kde_csv,
    write_report_csv,
    write_trajectory_csv,
    write_weissman_csv,
)
from .simulator import run_experiment, run_trial, trial_stream, validate_regret_sanity
from .stattests import kde_rate_suite, weissman_suite


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cbwk",
        description="Re-solving simulation for binary contextual bandits with knapsacks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte-Carlo regret experiment")
    run.add_argument("--config", help="experiment config file (flags override it)")
    run.add_argument("--preset", help="bundled instance preset name")
    run.add_argument("--instance", help="instance file path")
    run.add_argument("--mode", choices=["full", "partial"])
    run.add_argument("--horizons", type=int, nargs="+", metavar="T")
    run.add_argument("--estimations", type=int, help="number of estimation batches")
    run.add_argument("--trials", type=int, help="trials per estimation batch")
    run.add_argument("--seed", type=int, help="master seed")
    run.add_argument("--out", help="report CSV path (figure lands next to it)")
    run.add_argument(
        "--paper-protocol",
        action="store_true",
        help="full protocol: 50 estimations x 400 trials, horizons 5000*2^k for k=0..5",
    )
    run.add_argument("--trajectories", action="store_true", help="log one trial per horizon")
    run.add_argument("--t-ci", action="store_true", help="Student-t CI instead of normal")
    run.add_argument("--workers", type=int, default=1, help="concurrent trials")

    est = sub.add_parser("esttest", help="statistical suites for the estimators")
    est_sub = est.add_subparsers(dest="suite", required=True)

    wm = est_sub.add_parser("weissman", help="discrete L1 concentration check")
    wm.add_argument("--support-size", type=int, default=4)
    wm.add_argument("--samples", type=int, default=1000, help="samples per repetition")
    wm.add_argument("--epsilon", type=float, default=0.1)
    wm.add_argument("--reps", type=int, default=2000)
    wm.add_argument("--rate-limit", type=float, default=0.12)
    wm.add_argument("--seed", type=int, default=0)
    wm.add_argument("--out", default="weissman.csv")

    kr = est_sub.add_parser("kde-rate", help="KDE error-rate direction check")
    kr.add_argument("--samples", type=int, nargs="+", default=[100, 10000])
    kr.add_argument("--reps", type=int, default=50)
    kr.add_argument("--c-h", type=float, default=1.0)
    kr.add_argument("--kernel", choices=sorted(KERNELS), default="fourth-order")
    kr.add_argument("--grid", type=int, default=512)
    kr.add_argument("--seed", type=int, default=0)
    kr.add_argument("--out", default="kde_rate.csv")

    return parser


def _merge_run_config(args) -> ExperimentConfig:
    if args.config:
        config = load_config(args.config)
    else:
        if not (args.preset or args.instance):
            raise ConfigError("run needs --config, --preset, or --instance")
        if args.out is None:
            raise ConfigError("run needs --out when no config file is given")
        config = ExperimentConfig(
            instance=args.preset or args.instance,
            mode=args.mode or "full",
            horizons=tuple(args.horizons) if args.horizons else DEFAULT_HORIZONS,
            n_estimations=args.estimations if args.estimations is not None else 10,
            n_trials=args.trials if args.trials is not None else 100,
            master_seed=args.seed if args.seed is not None else 0,
            out=args.out,
        )

    # explicit flags override whatever the file said
    overrides = dict(
        instance=args.preset or args.instance,
        mode=args.mode,
        horizons=tuple(args.horizons) if args.horizons else None,
        n_estimations=args.estimations,
        n_trials=args.trials,
        master_seed=args.seed,
        out=args.out,
    )
    for name, value in overrides.items():
        if value is not None:
            setattr(config, name, value)
    if args.trajectories:
        config.trajectories = True
    if args.t_ci:
        config.t_ci = True
    if args.paper_protocol:
        config.horizons = PAPER_HORIZONS
        config.n_estimations = 50
        config.n_trials = 400
    return ExperimentConfig(**{f: getattr(config, f) for f in config.__dataclass_fields__})


def cmd_run(args) -> int:
    try:
        config = _merge_run_config(args)
        instance = config.resolve_instance()
    except (ConfigError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    mode = FeedbackMode.from_string(config.mode)
    report = run_experiment(
        instance,
        mode,
        config.horizons,
        config.n_estimations,
        config.n_trials,
        config.master_seed,
        use_t_ci=config.t_ci,
        workers=max(1, args.workers),
    )

    out = Path(config.out)
    write_report_csv(report, out)
    render_regret_figure(report, figure_path(out))
    if config.trajectories:
        for T in config.horizons:
            res = run_trial(
                instance.with_horizon(T),
                mode,
                _policy_for(instance.with_horizon(T), mode),
                trial_stream(config.master_seed, T, 0, 0),
                collect_trajectory=True,
            )
            write_trajectory_csv(res, out.with_name(f"{out.stem}_traj_T{T}.csv"))

    slope = "n/a" if report.slope is None else f"{report.slope:.3f}"
    print(f"instance={config.instance} mode={config.mode} seed={config.master_seed}")
    print(f"{'T':>8}  {'fluid':>12}  {'regret':>10}  {'ci99':>8}")
    for row in report.results:
        print(
            f"{row.T:>8}  {row.fluid_value:>12.2f}  {row.mean_regret:>10.3f}  "
            f"{row.ci99_halfwidth:>8.3f}"
        )
    print(f"log-log regret slope: {slope}")
    if report.slope_note:
        print(f"note: {report.slope_note}")
    print(f"report: {out}  figure: {figure_path(out)}")

    problems = validate_regret_sanity(report)
    if problems:
        for p in problems:
            print(f"regret sanity violated: {p}", file=sys.stderr)
        return 1
    return 0


def _policy_for(instance, mode):
    from .policy import ResolvingPolicy

    return ResolvingPolicy(instance, mode)


def cmd_esttest(args) -> int:
    out = Path(args.out)
    if args.suite == "weissman":
        if args.reps < 1:
            print("error: --reps must be >= 1", file=sys.stderr)
            return 2
        if not 0.0 < args.epsilon < 1.0:
            print("error: --epsilon must lie in (0, 1)", file=sys.stderr)
            return 2
        if args.support_size < 2:
            print("error: --support-size must be >= 2", file=sys.stderr)
            return 2
        a = args.support_size
        mass = [2.0 * (a - i) / (a * (a + 1)) for i in range(a)]
        result = weissman_suite(
            mass=mass,
            m=args.samples,
            epsilon=args.epsilon,
            reps=args.reps,
            seed=args.seed,
            rate_limit=args.rate_limit,
        )
        write_weissman_csv(result, out)
        render_weissman_figure(result, figure_path(out))
        verdict = "PASS" if result.passed else "FAIL"
        print(
            f"weissman a={a} m={args.samples} eps={args.epsilon} reps={args.reps}: "
            f"threshold {result.threshold:.5f}, violation rate "
            f"{result.violation_rate:.4f} (limit {result.rate_limit}) -> {verdict}"
        )
        return 0 if result.passed else 1

    if args.suite == "kde-rate":
        if args.reps < 1:
            print("error: --reps must be >= 1", file=sys.stderr)
            return 2
        try:
            result = kde_rate_suite(
                sample_sizes=args.samples,
                reps=args.reps,
                seed=args.seed,
                kernel=KERNELS[args.kernel],
                c_h=args.c_h,
                grid_per_axis=args.grid,
            )
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        write_kde_csv(result, out)
        render_kde_figure(result, figure_path(out))
        verdict = "PASS" if result.passed else "FAIL"
        meds = ", ".join(
            f"m={m}: {e:.4f}" for m, e in zip(result.sample_sizes, result.median_errors)
        )
        print(f"kde-rate medians [{meds}] decreasing -> {verdict}")
        return 0 if result.passed else 1

    raise AssertionError(f"unknown suite {args.suite!r}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    if args.command == "esttest":
        return cmd_esttest(args)
    raise AssertionError(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
