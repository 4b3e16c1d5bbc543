"""Trial execution and Monte-Carlo regret estimation.

Nature draws the context and the external factor i.i.d. every round from
counter-derived randomness streams, one stream per (master seed, horizon,
batch, trial): reports are reproducible and independent of execution order,
so parallel and serial runs agree bit for bit.  The factor is drawn even on
rounds where the policy never observes it, which couples full- and
partial-information runs under equal seeds.

Trials over finite context/factor spaces without trajectory collection run
through a compiled whole-trial loop; the round-by-round Python path (used
for trajectory logging and continuous factor spaces) performs the identical
arithmetic and produces identical results.

Regret protocol: per horizon, ``n_estimations`` batches of ``n_trials``
trials each; every batch mean is one estimate of the expected reward, and
the mean regret and 99% confidence half-width are computed across batch
means (normal quantile 2.576 by default, Student-t behind a flag for small
batch counts).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._native import pick_index, run_trial_finite
from .model import ProblemInstance, evaluate_outcome, fluid_value
from .policy import FeedbackMode, ResolvingPolicy

NORMAL_Q99 = 2.576


def trial_stream(master_seed: int, T: int, batch: int, trial: int) -> np.random.Generator:
    """Counter-based per-trial randomness stream."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(T), int(batch), int(trial)))
    return np.random.Generator(np.random.Philox(ss))


class _SingleDraw:
    """Hands the policy its one uniform draw for the round."""

    __slots__ = ("_value", "_used")

    def __init__(self, value: float):
        self._value = value
        self._used = False

    def random(self) -> float:
        if self._used:
            raise RuntimeError("policy consumed more than one draw in a round")
        self._used = True
        return self._value


@dataclass(frozen=True)
class TrajectoryRow:
    t: int
    theta: int
    phi: float
    a: int
    reward: float
    budget_after: np.ndarray
    rho_t: np.ndarray
    lp_objective: float


@dataclass(frozen=True)
class TrialResult:
    """Totals of one trial: reward, stopping round, active-action count."""

    accumulated_reward: float
    stop_time: int
    actions_taken: int
    seed: object
    final_budget: np.ndarray
    lp_failures: int = 0
    min_sample_frac: float | None = None
    trajectory: tuple[TrajectoryRow, ...] | None = None


def _as_generator(seed):
    if isinstance(seed, np.random.Generator):
        return seed, None
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed)), seed.spawn_key or seed.entropy
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed)))), int(seed)


def run_trial(
    instance: ProblemInstance,
    mode: FeedbackMode,
    policy,
    seed,
    collect_trajectory: bool = False,
    sample_window: tuple[int, int] | None = None,
    force_python: bool = False,
) -> TrialResult:
    """Run one trial of the policy on the instance.

    ``seed`` may be an int, a SeedSequence (see ``trial_stream``), or a
    Generator.  ``sample_window`` = (lo, hi) additionally reports the
    minimum over rounds lo..hi of the pre-round active fraction
    Y_t / (t - 1), used by the sample-accrual diagnostics.
    """
    rng, seed_id = _as_generator(seed)
    T = instance.T
    win_lo, win_hi = sample_window if sample_window is not None else (1, 0)

    fast = getattr(policy, "_fast_params", None)
    if (
        not force_python
        and not collect_trajectory
        and instance.is_finite_factor
        and fast is not None
    ):
        resolve, phi_fixed = fast()
        uniforms = rng.random((T, 3))
        total, stop_time, actions, min_frac, budget, lp_failures = run_trial_finite(
            instance.context.cumulative,
            instance.factor.cumulative,
            instance.reward_matrix,
            instance.consumption_tensor,
            instance.rho,
            T,
            policy.stop_threshold,
            mode is FeedbackMode.PARTIAL_INFO,
            resolve,
            phi_fixed,
            instance.r_max,
            instance.c_max,
            uniforms,
            win_lo,
            win_hi,
        )
        return TrialResult(
            accumulated_reward=total,
            stop_time=stop_time,
            actions_taken=actions,
            seed=seed_id,
            final_budget=budget,
            lp_failures=lp_failures,
            min_sample_frac=None if sample_window is None else float(min_frac),
        )

    # round-by-round path: same draws, same arithmetic, plus bookkeeping
    gdim = 1 if instance.is_finite_factor else instance.factor.dim
    uniforms = rng.random((T, gdim + 2))
    state = policy.initial_state()
    total = 0.0
    actions = 0
    lp_failures = 0
    stop_time = T
    min_frac = math.inf
    rows: list[TrajectoryRow] = []
    u_cum = instance.context.cumulative
    v_cum = instance.factor.cumulative if instance.is_finite_factor else None

    for t in range(1, T + 1):
        if win_lo <= t <= win_hi and t >= 2:
            min_frac = min(min_frac, actions / (t - 1))
        row = uniforms[t - 1]
        theta = int(pick_index(u_cum, row[0]))
        if instance.is_finite_factor:
            gamma = int(pick_index(v_cum, row[1]))
        else:
            gamma = instance.factor.transform(row[1 : 1 + gdim][None, :])[0]
        decision = policy.step(state, theta, _SingleDraw(row[-1]))
        outcome = evaluate_outcome(instance, theta, decision.a, gamma)
        policy.observe(state, decision, theta, gamma, outcome)
        total += outcome.reward
        actions += decision.a
        lp_failures += int(decision.lp_failed)
        if collect_trajectory:
            rows.append(
                TrajectoryRow(
                    t=t,
                    theta=theta,
                    phi=decision.phi_at_theta,
                    a=decision.a,
                    reward=outcome.reward,
                    budget_after=state.budget.copy(),
                    rho_t=decision.rho_t,
                    lp_objective=decision.lp_objective,
                )
            )
        if state.stopped:
            stop_time = t
            break

    return TrialResult(
        accumulated_reward=total,
        stop_time=stop_time,
        actions_taken=actions,
        seed=seed_id,
        final_budget=state.budget.copy(),
        lp_failures=lp_failures,
        min_sample_frac=None if sample_window is None else float(min_frac),
        trajectory=tuple(rows) if collect_trajectory else None,
    )


# ---------------------------------------------------------------------------
# experiment harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HorizonResult:
    """Regret statistics for one horizon."""

    T: int
    fluid_value: float
    mean_regret: float
    ci99_halfwidth: float
    batch_regrets: np.ndarray


@dataclass(frozen=True)
class RegretReport:
    mode: FeedbackMode
    n_estimations: int
    n_trials: int
    master_seed: int
    results: tuple[HorizonResult, ...]
    slope: float | None
    slope_note: str
    use_t_ci: bool

    @property
    def horizons(self) -> tuple[int, ...]:
        return tuple(r.T for r in self.results)


def batch_regret_stats(
    batch_regrets: np.ndarray, use_t_ci: bool = False
) -> tuple[float, float]:
    """Mean regret and 99% CI half-width across estimation batches."""
    batch_regrets = np.asarray(batch_regrets, dtype=float)
    n = batch_regrets.size
    if n < 2:
        raise ValueError("need at least 2 estimation batches for a CI")
    if use_t_ci:
        from scipy import stats

        q = float(stats.t.ppf(0.995, n - 1))
    else:
        q = NORMAL_Q99
    sd = float(batch_regrets.std(ddof=1))
    return float(batch_regrets.mean()), q * sd / math.sqrt(n)


def run_experiment(
    instance: ProblemInstance,
    mode: FeedbackMode,
    horizons,
    n_estimations: int,
    n_trials: int,
    master_seed: int,
    policy_factory=None,
    use_t_ci: bool = False,
    workers: int = 1,
) -> RegretReport:
    """Monte-Carlo regret estimate over a list of horizons.

    Each trial draws its randomness from ``trial_stream(master_seed, T,
    batch, trial)``, so the report depends only on the arguments, not on
    scheduling; ``workers`` > 1 runs trials of one horizon concurrently and
    yields the identical report.
    """
    horizons = [int(T) for T in horizons]
    if not horizons:
        raise ValueError("need at least one horizon")
    if n_estimations < 2:
        raise ValueError("need n_estimations >= 2")
    if n_trials < 1:
        raise ValueError("need n_trials >= 1")
    if policy_factory is None:
        policy_factory = ResolvingPolicy

    results = []
    for T in horizons:
        inst = instance.with_horizon(T)
        fluid = fluid_value(inst)
        policy = policy_factory(inst, mode)
        rewards = np.empty((n_estimations, n_trials))

        def _cell(task, inst=inst, policy=policy, T=T):
            b, j = task
            res = run_trial(inst, mode, policy, trial_stream(master_seed, T, b, j))
            return b, j, res.accumulated_reward

        tasks = [(b, j) for b in range(n_estimations) for j in range(n_trials)]
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for b, j, val in pool.map(_cell, tasks):
                    rewards[b, j] = val
        else:
            for task in tasks:
                b, j, val = _cell(task)
                rewards[b, j] = val

        batch_regrets = fluid - rewards.mean(axis=1)
        mean_regret, ci = batch_regret_stats(batch_regrets, use_t_ci)
        results.append(
            HorizonResult(
                T=T,
                fluid_value=fluid,
                mean_regret=mean_regret,
                ci99_halfwidth=ci,
                batch_regrets=batch_regrets,
            )
        )

    report = RegretReport(
        mode=mode,
        n_estimations=n_estimations,
        n_trials=n_trials,
        master_seed=int(master_seed),
        results=tuple(results),
        slope=None,
        slope_note="",
        use_t_ci=use_t_ci,
    )
    note = ""
    excluded = [r.T for r in results if r.mean_regret <= 0.0]
    if excluded:
        note = f"horizons with nonpositive mean regret excluded from slope fit: {excluded}"
    try:
        slope = fit_loglog_slope(report)
    except ValueError as exc:
        slope = None
        note = (note + "; " if note else "") + str(exc)
    object.__setattr__(report, "slope", slope)
    object.__setattr__(report, "slope_note", note)
    return report


def fit_loglog_slope(report: RegretReport) -> float:
    """OLS slope of log(mean regret) against log(T).

    Horizons with nonpositive mean regret carry no information about the
    growth rate and are excluded; at least three positive horizons must
    remain.  A slope near 0.5 indicates square-root growth, near 0 a
    horizon-free regret.
    """
    pts = [(r.T, r.mean_regret) for r in report.results if r.mean_regret > 0.0]
    if len(pts) < 3:
        raise ValueError(
            "log-log slope needs at least 3 horizons with positive mean regret"
        )
    logt = np.log([p[0] for p in pts])
    logr = np.log([p[1] for p in pts])
    return float(np.polyfit(logt, logr, 1)[0])


def validate_regret_sanity(report: RegretReport) -> list[str]:
    """The fluid benchmark upper-bounds any policy, so mean regret may dip
    below zero only within noise: flag horizons with mean regret below
    minus one CI half-width."""
    problems = []
    for r in report.results:
        if r.mean_regret < -r.ci99_halfwidth:
            problems.append(
                f"T={r.T}: mean regret {r.mean_regret:.4f} below -CI "
                f"{-r.ci99_halfwidth:.4f}"
            )
    return problems
