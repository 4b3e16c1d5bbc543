import numpy as np
import pytest

import cbwk.policy as policy_mod
from cbwk.fluidlp import FluidSolution, LpStatus
from cbwk.model import (
    FiniteContextSpace,
    FiniteFactorSpace,
    ProblemInstance,
    evaluate_outcome,
)
from cbwk.policy import (
    FeedbackMode,
    ResolvingPolicy,
    StaticFluidPolicy,
    static_fluid_baseline,
)
from cbwk.presets import raised_cosine_factor_space
from cbwk.simulator import run_trial, trial_stream

from conftest import random_finite_instance

FULL = FeedbackMode.FULL_INFO
PARTIAL = FeedbackMode.PARTIAL_INFO


class _Draws:
    """Scripted uniform draws for step()."""

    def __init__(self, values):
        self.values = list(values)

    def random(self):
        return self.values.pop(0)


def _half_probability_instance(T=20):
    # single context, single factor: the plug-in LP is max phi, 2 phi <= 1
    return ProblemInstance(
        context=FiniteContextSpace(np.array([1.0])),
        factor=FiniteFactorSpace(np.array([1.0])),
        rho=np.array([1.0]),
        T=T,
        reward_matrix=np.array([[1.0]]),
        consumption_tensor=np.array([[[2.0]]]),
    )


def _forced_action_instance(T=120):
    # single context with budgets matching peak consumption: the estimated
    # program always admits phi = 1, so every round plays the active action
    rng = np.random.default_rng(11)
    g = 3
    cons = rng.uniform(0.1, 0.9, (2, 1, g))
    cons[0, 0, 0] = 1.0
    return ProblemInstance(
        context=FiniteContextSpace(np.array([1.0])),
        factor=FiniteFactorSpace(np.array([0.2, 0.5, 0.3])),
        rho=np.array([1.0, 1.0]),
        T=T,
        reward_matrix=rng.uniform(0.2, 1.0, (1, g)),
        consumption_tensor=cons,
    )


class TestStep:
    def test_bernoulli_convention(self):
        inst = _half_probability_instance()
        pol = ResolvingPolicy(inst, FULL)
        state = pol.initial_state()
        dec = pol.step(state, 0, _Draws([0.9]))
        assert dec.phi_at_theta == 0.5
        assert dec.a == 0
        dec = pol.step(state, 0, _Draws([0.3]))
        assert dec.a == 1
        dec = pol.step(state, 0, _Draws([0.5]))
        assert dec.a == 0  # draw < phi is strict

    def test_exactly_one_draw_consumed(self):
        inst = _half_probability_instance()
        pol = ResolvingPolicy(inst, FULL)
        draws = _Draws([0.4, 0.7])
        pol.step(pol.initial_state(), 0, draws)
        assert len(draws.values) == 1

    def test_cold_start_round_one(self, nondegenerate_instance):
        pol = ResolvingPolicy(nondegenerate_instance, FULL)
        state = pol.initial_state()
        dec = pol.step(state, 0, _Draws([0.99]))
        assert dec.rho_t == pytest.approx([1.0, 1.0])
        assert 0.0 <= dec.phi_at_theta <= 1.0
        assert dec.a in (0, 1)

    def test_dominant_budget_forces_action(self):
        inst = random_finite_instance(np.random.default_rng(2), T=50)
        big = inst.__class__(
            context=inst.context,
            factor=inst.factor,
            rho=np.full(inst.n, 10.0 * inst.c_max),
            T=50,
            reward_matrix=np.clip(inst.reward_matrix, 0.05, None),
            consumption_tensor=inst.consumption_tensor,
        )
        pol = ResolvingPolicy(big, FULL)
        dec = pol.step(pol.initial_state(), 0, _Draws([0.999999]))
        assert dec.phi_at_theta == pytest.approx(1.0)
        assert dec.a == 1

    def test_step_guards(self, nondegenerate_instance):
        pol = ResolvingPolicy(nondegenerate_instance, FULL)
        state = pol.initial_state()
        state.stopped = True
        with pytest.raises(RuntimeError, match="stopped"):
            pol.step(state, 0, _Draws([0.5]))

    def test_lp_failure_falls_back_to_null_action(
        self, nondegenerate_instance, monkeypatch
    ):
        failure = FluidSolution(
            phi=np.zeros(3),
            lam=np.zeros(2),
            objective=0.0,
            binding=frozenset(),
            status=LpStatus.NUMERIC_FAILURE,
        )
        monkeypatch.setattr(policy_mod, "solve_lp", lambda lp: failure)
        pol = ResolvingPolicy(nondegenerate_instance, FULL)
        dec = pol.step(pol.initial_state(), 0, _Draws([0.0]))
        assert dec.a == 0
        assert dec.lp_failed


class TestObserve:
    def test_budget_ledger_subtraction(self):
        inst = ProblemInstance(
            context=FiniteContextSpace(np.array([1.0])),
            factor=FiniteFactorSpace(np.array([1.0])),
            rho=np.array([0.5, 0.6]),
            T=100,
            reward_matrix=np.array([[1.0]]),
            consumption_tensor=np.array([[[1.1]], [[0.9]]]),
        )
        pol = ResolvingPolicy(inst, FULL)
        state = pol.initial_state()
        assert state.budget == pytest.approx([50.0, 60.0])
        dec = pol.step(state, 0, _Draws([0.0]))
        assert dec.a == 1
        out = evaluate_outcome(inst, 0, 1, 0)
        pol.observe(state, dec, 0, 0, out)
        assert state.budget == pytest.approx([48.9, 59.1], abs=0)

    def test_partial_info_skips_factor_sample_on_null(self, nondegenerate_instance):
        pol = ResolvingPolicy(nondegenerate_instance, PARTIAL)
        state = pol.initial_state()
        dec = pol.step(state, 0, _Draws([0.999999999]))
        if dec.a == 1:  # engineered draw should refuse, but stay robust
            pytest.skip("draw accepted unexpectedly")
        pol.observe(state, dec, 0, 1, evaluate_outcome(nondegenerate_instance, 0, 0, 1))
        assert state.v_est.m == 0
        assert state.u_est.m == 1
        assert state.samples_observed == 0

    def test_remaining_rate_recurrence_single_round(self):
        # rho_2 = rho_1 + (rho_1 - c_1) / (T - 1)
        inst = ProblemInstance(
            context=FiniteContextSpace(np.array([1.0])),
            factor=FiniteFactorSpace(np.array([1.0])),
            rho=np.array([1.0, 1.0]),
            T=10,
            reward_matrix=np.array([[1.0]]),
            consumption_tensor=np.array([[[0.5]], [[1.5]]]),
        )
        pol = ResolvingPolicy(inst, FULL, stop_threshold=0.0)
        state = pol.initial_state()
        dec = pol.step(state, 0, _Draws([0.0]))
        assert dec.a == 1
        pol.observe(state, dec, 0, 0, evaluate_outcome(inst, 0, 1, 0))
        expected = np.array([1.0, 1.0]) + (np.array([1.0, 1.0]) - np.array([0.5, 1.5])) / 9
        assert pol.remaining_rate(state) == pytest.approx(expected, rel=1e-15)
        assert pol.remaining_rate(state) == pytest.approx(
            [1 + 0.5 / 9, 1 - 0.5 / 9], rel=1e-12
        )

    def test_decision_round_must_match_state(self, nondegenerate_instance):
        pol = ResolvingPolicy(nondegenerate_instance, FULL)
        state = pol.initial_state()
        dec = pol.step(state, 0, _Draws([0.5]))
        pol.observe(state, dec, 0, 0, evaluate_outcome(nondegenerate_instance, 0, dec.a, 0))
        with pytest.raises(ValueError, match="round"):
            pol.observe(state, dec, 0, 0, evaluate_outcome(nondegenerate_instance, 0, 0, 0))

    def test_sample_index_bookkeeping(self, nondegenerate_instance):
        # after round t completes, the state's round counter reads t + 1 and
        # |I| equals t under full information or the action count otherwise
        rng = np.random.default_rng(8)
        inst = nondegenerate_instance.with_horizon(200)
        for mode in (FULL, PARTIAL):
            pol = ResolvingPolicy(inst, mode)
            state = pol.initial_state()
            actions = 0
            for t in range(1, 61):
                theta = int(rng.integers(3))
                gamma = int(rng.integers(2))
                dec = pol.step(state, theta, _Draws([rng.random()]))
                pol.observe(state, dec, theta, gamma, evaluate_outcome(inst, theta, dec.a, gamma))
                actions += dec.a
                assert state.t == t + 1
                assert state.u_est.m == t
                expected = t if mode is FULL else actions
                assert state.samples_observed == expected


class TestBudgetInvariants:
    def test_recurrence_holds_along_trajectories(self):
        rng = np.random.default_rng(3)
        for _ in range(8):
            inst = random_finite_instance(rng, T=int(rng.integers(40, 120)))
            pol = ResolvingPolicy(inst, FULL)
            res = run_trial(
                inst, FULL, pol, trial_stream(9, inst.T, 0, 0),
                force_python=True, collect_trajectory=True,
            )
            budget_before = inst.rho * inst.T
            for row in res.trajectory:
                c_t = budget_before - row.budget_after
                if row.t < inst.T:
                    lhs = row.budget_after / (inst.T - row.t)
                    rhs = row.rho_t + (row.rho_t - c_t) / (inst.T - row.t)
                    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)
                budget_before = row.budget_after

    def test_no_overdraft_at_termination(self):
        rng = np.random.default_rng(4)
        for i in range(50):
            inst = random_finite_instance(rng)
            mode = FULL if i % 2 == 0 else PARTIAL
            res = run_trial(inst, mode, ResolvingPolicy(inst, mode), trial_stream(10, inst.T, 0, i))
            assert np.all(res.final_budget >= 0.0), (i, res.final_budget)

    def test_stop_threshold_defaults(self, nondegenerate_instance):
        assert ResolvingPolicy(nondegenerate_instance, FULL).stop_threshold == 2.2
        small = _half_probability_instance()
        assert ResolvingPolicy(
            small.__class__(
                context=small.context,
                factor=small.factor,
                rho=small.rho,
                T=small.T,
                reward_matrix=small.reward_matrix,
                consumption_tensor=np.array([[[0.7]]]),
            ),
            FULL,
        ).stop_threshold == 1.0

    def test_tiny_budget_stops_almost_immediately(self):
        # rho*T below the stopping threshold trips the cutoff in round one
        inst = ProblemInstance(
            context=FiniteContextSpace(np.array([1.0])),
            factor=FiniteFactorSpace(np.array([1.0])),
            rho=np.array([0.004]),
            T=200,
            reward_matrix=np.array([[1.0]]),
            consumption_tensor=np.array([[[1.0]]]),
        )
        res = run_trial(inst, FULL, static_fluid_baseline(inst), trial_stream(1, 200, 0, 0))
        assert res.stop_time == 1


class TestModeCoupling:
    def test_forced_action_equivalence(self):
        inst = _forced_action_instance()
        results = {}
        for mode in (FULL, PARTIAL):
            pol = ResolvingPolicy(inst, mode)
            state = pol.initial_state()
            res = run_trial(inst, mode, pol, trial_stream(21, inst.T, 0, 0), force_python=True,
                            collect_trajectory=True)
            assert all(row.a == 1 for row in res.trajectory)
            results[mode] = res
        assert (
            results[FULL].accumulated_reward == results[PARTIAL].accumulated_reward
        )
        assert results[FULL].stop_time == results[PARTIAL].stop_time

    def test_sample_accrual_under_partial_info(self, nondegenerate_instance):
        # pre-round active fraction stays well above 0.2 through the middle
        # of the horizon in nearly every seeded trial
        T = 20000
        inst = nondegenerate_instance.with_horizon(T)
        pol = ResolvingPolicy(inst, PARTIAL)
        window = (int(0.1 * T), int(0.4 * T))
        ok = 0
        for j in range(100):
            res = run_trial(inst, PARTIAL, pol, trial_stream(77, T, 0, j), sample_window=window)
            if res.min_sample_frac > 0.2:
                ok += 1
        assert ok >= 95, f"only {ok}/100 trials kept the sample fraction above 0.2"


class TestStaticBaseline:
    def test_plays_fluid_control(self, nondegenerate_instance):
        pol = static_fluid_baseline(nondegenerate_instance)
        assert isinstance(pol, StaticFluidPolicy)
        assert pol.phi_star == pytest.approx([2 / 3, 2 / 3, 1.0], abs=1e-9)
        state = pol.initial_state()
        dec = pol.step(state, 2, _Draws([0.9999]))
        assert dec.a == 1  # phi(theta_3) = 1

    def test_saturated_budgets_play_everything(self, nondegenerate_instance):
        inst = nondegenerate_instance.__class__(
            context=nondegenerate_instance.context,
            factor=nondegenerate_instance.factor,
            rho=np.array([50.0, 50.0]),
            T=100,
            reward_matrix=nondegenerate_instance.reward_matrix,
            consumption_tensor=nondegenerate_instance.consumption_tensor,
        )
        assert static_fluid_baseline(inst).phi_star == pytest.approx([1.0, 1.0, 1.0])


class TestContinuousFactorPolicy:
    def test_kde_policy_trial_runs(self):
        inst = ProblemInstance(
            context=FiniteContextSpace(np.array([0.4, 0.6])),
            factor=raised_cosine_factor_space(grid_per_axis=128),
            rho=np.array([0.6]),
            T=40,
            reward_fn=lambda k, pts: (0.3 + 0.2 * k) + 0.4 * pts[:, 0],
            consumption_fn=lambda k, pts: (0.5 + 0.2 * k) * pts[None, :, 0] + 0.2,
            r_max=0.9,
            c_max=0.9,
        )
        for mode in (FULL, PARTIAL):
            pol = ResolvingPolicy(inst, mode)
            res = run_trial(inst, mode, pol, trial_stream(31, 40, 0, 0))
            assert 0.0 <= res.accumulated_reward <= 40 * inst.r_max
            assert 1 <= res.stop_time <= 40
            assert np.all(res.final_budget >= 0.0)

    def test_kde_estimator_only_sees_revealed_samples(self):
        inst = ProblemInstance(
            context=FiniteContextSpace(np.array([1.0])),
            factor=raised_cosine_factor_space(grid_per_axis=128),
            rho=np.array([0.5]),
            T=30,
            reward_fn=lambda k, pts: 0.5 * np.ones(pts.shape[0]),
            consumption_fn=lambda k, pts: 0.4 * np.ones((1, pts.shape[0])),
            r_max=0.5,
            c_max=0.4,
        )
        rng = np.random.default_rng(33)
        pol = ResolvingPolicy(inst, PARTIAL)
        state = pol.initial_state()
        actions = 0
        for t in range(1, 21):
            gamma = inst.factor.transform(rng.random(1))[0]
            dec = pol.step(state, 0, _Draws([rng.random()]))
            pol.observe(state, dec, 0, gamma, evaluate_outcome(inst, 0, dec.a, gamma))
            actions += dec.a
            assert state.v_est.m == actions
