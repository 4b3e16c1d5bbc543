"""Budget-aware policies: the per-round re-solving controller and a static
fluid baseline.

The re-solving controller recomputes the average remaining budget
rho_t = B_t / (T - t + 1) each round, solves the fluid program built from
the current plug-in estimates, and plays the active action with the
probability the solution assigns to the observed context.  Exactly one
uniform draw is consumed per round regardless of the probability, so
trajectories are comparable across policies and feedback modes under a
shared seed.  The context estimator sees every round's context; the factor
estimator sees the external factor only when the feedback mode reveals it.

A trial ends early once any remaining budget falls below the stopping
threshold, which defaults to max(1, c_max): the classic "budget below 1"
cutoff in unit-scaled problems, widened just enough to rule out overdraft
when consumption exceeds 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .estimators import (
    FOURTH_ORDER,
    DiscreteEstimator,
    KdeEstimator,
    KernelSpec,
    estimate_expectations,
)
from .fluidlp import LpStatus, build_fluid_lp, solve_lp
from .model import FiniteFactorSpace, Outcome, ProblemInstance, fluid_solution


class FeedbackMode(enum.Enum):
    """When the external factor is revealed to the policy."""

    FULL_INFO = "full"
    PARTIAL_INFO = "partial"

    @classmethod
    def from_string(cls, text: str) -> "FeedbackMode":
        for mode in cls:
            if mode.value == text:
                return mode
        raise ValueError(f"unknown feedback mode {text!r}; use 'full' or 'partial'")


@dataclass
class PolicyState:
    """Mutable per-trial state: remaining budget, round index, estimators.

    ``t`` is the index of the next round to play (1-based), so after round
    tau completes t equals tau + 1 and the context estimator holds t - 1
    samples.  ``budget`` is the exact ledger B_t = rho*T - sum of realized
    consumption, updated by one subtraction per round.
    """

    budget: np.ndarray
    t: int
    u_est: DiscreteEstimator
    v_est: DiscreteEstimator | KdeEstimator
    stopped: bool = False

    @property
    def samples_observed(self) -> int:
        """Number of external-factor samples collected so far (|I_t|)."""
        return self.v_est.m


@dataclass(frozen=True)
class ActionDecision:
    """One round's action with solver diagnostics."""

    a: int
    phi_at_theta: float
    rho_t: np.ndarray
    lp_objective: float
    t: int
    lp_failed: bool = False


class _BudgetedPolicy:
    """Shared budget ledger, sample collection, and stopping machinery."""

    def __init__(
        self,
        instance: ProblemInstance,
        mode: FeedbackMode,
        stop_threshold: float | None = None,
    ):
        self.instance = instance
        self.mode = mode
        if stop_threshold is None:
            stop_threshold = max(1.0, instance.c_max)
        self.stop_threshold = float(stop_threshold)

    def _make_v_estimator(self) -> DiscreteEstimator | KdeEstimator:
        factor = self.instance.factor
        if isinstance(factor, FiniteFactorSpace):
            return DiscreteEstimator(factor.size)
        return KdeEstimator(factor.dim, kernel=self._kde_kernel, beta=factor.beta, c_h=self._kde_c_h)

    _kde_kernel: KernelSpec = FOURTH_ORDER
    _kde_c_h: float = 1.0

    def initial_state(self) -> PolicyState:
        return PolicyState(
            budget=self.instance.rho * self.instance.T,
            t=1,
            u_est=DiscreteEstimator(self.instance.context.size),
            v_est=self._make_v_estimator(),
        )

    def remaining_rate(self, state: PolicyState) -> np.ndarray:
        """rho_t = B_t / (T - t + 1), clamped at zero near depletion."""
        rho_t = state.budget / (self.instance.T - state.t + 1)
        return np.maximum(rho_t, 0.0)

    def observe(
        self,
        state: PolicyState,
        decision: ActionDecision,
        theta: int,
        gamma,
        outcome: Outcome,
    ) -> PolicyState:
        """Fold one round's observations into the state.

        The context sample is always recorded; the factor sample only under
        full information or after an active action.  The budget ledger is
        decremented and the stopping flag raised once any resource drops
        below the threshold.
        """
        if decision.t != state.t:
            raise ValueError(
                f"decision from round {decision.t} applied to state at round {state.t}"
            )
        state.u_est.update(theta)
        if self.mode is FeedbackMode.FULL_INFO or decision.a == 1:
            state.v_est.update(gamma)
        state.budget -= outcome.consumption
        state.t += 1
        if np.any(state.budget < self.stop_threshold):
            state.stopped = True
        return state


class ResolvingPolicy(_BudgetedPolicy):
    """Re-solve the estimated fluid program every round and randomize."""

    def __init__(
        self,
        instance: ProblemInstance,
        mode: FeedbackMode,
        stop_threshold: float | None = None,
        kde_kernel: KernelSpec = FOURTH_ORDER,
        kde_c_h: float = 1.0,
    ):
        super().__init__(instance, mode, stop_threshold)
        self._kde_kernel = kde_kernel
        self._kde_c_h = kde_c_h

    def step(self, state: PolicyState, theta: int, rng) -> ActionDecision:
        """Solve the plug-in program at rho_t and draw the action.

        ``rng`` only needs a ``random()`` method; exactly one draw is
        consumed.  A numeric LP failure degrades to the always-feasible
        null action instead of aborting the trial.
        """
        if state.stopped:
            raise RuntimeError("step called on a stopped trial")
        if state.t > self.instance.T:
            raise RuntimeError("step called past the horizon")
        rho_t = self.remaining_rate(state)
        est = estimate_expectations(state.v_est, self.instance)
        lp = build_fluid_lp(state.u_est.mass(), est, rho_t)
        sol = solve_lp(lp)
        if sol.status is LpStatus.OPTIMAL:
            prob = float(sol.phi[theta])
            objective = sol.objective
            failed = False
        else:
            prob = 0.0
            objective = float("nan")
            failed = True
        a = 1 if rng.random() < prob else 0
        return ActionDecision(
            a=a,
            phi_at_theta=prob,
            rho_t=rho_t,
            lp_objective=objective,
            t=state.t,
            lp_failed=failed,
        )

    def _fast_params(self):
        return True, np.zeros(self.instance.context.size)


class StaticFluidPolicy(_BudgetedPolicy):
    """Solve the fluid program once with the true distributions, then replay.

    Shares the budget/stopping machinery with the re-solving controller, so
    the two are directly comparable trial for trial.
    """

    def __init__(
        self,
        instance: ProblemInstance,
        mode: FeedbackMode,
        stop_threshold: float | None = None,
    ):
        super().__init__(instance, mode, stop_threshold)
        self.phi_star = fluid_solution(instance).phi

    def step(self, state: PolicyState, theta: int, rng) -> ActionDecision:
        if state.stopped:
            raise RuntimeError("step called on a stopped trial")
        if state.t > self.instance.T:
            raise RuntimeError("step called past the horizon")
        prob = float(self.phi_star[theta])
        a = 1 if rng.random() < prob else 0
        return ActionDecision(
            a=a,
            phi_at_theta=prob,
            rho_t=self.remaining_rate(state),
            lp_objective=float("nan"),
            t=state.t,
        )

    def _fast_params(self):
        return False, self.phi_star


def static_fluid_baseline(
    instance: ProblemInstance,
    mode: FeedbackMode = FeedbackMode.FULL_INFO,
    stop_threshold: float | None = None,
) -> StaticFluidPolicy:
    """Comparison baseline: play the true fluid control all horizon."""
    return StaticFluidPolicy(instance, mode, stop_threshold)
