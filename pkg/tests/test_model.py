import numpy as np
import pytest

from cbwk.model import (
    ContinuousFactorSpace,
    DomainError,
    FiniteContextSpace,
    FiniteFactorSpace,
    ProblemInstance,
    evaluate_outcome,
    fluid_solution,
    fluid_value,
    true_expectations,
)
from cbwk.presets import raised_cosine_factor_space

from conftest import random_finite_instance


class TestSpaces:
    def test_mass_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            FiniteContextSpace(np.array([0.5, 0.6]))

    def test_mass_entries_in_unit_interval(self):
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            FiniteFactorSpace(np.array([1.2, -0.2]))

    def test_names_must_be_distinct(self):
        with pytest.raises(ValueError, match="distinct"):
            FiniteContextSpace(np.array([0.5, 0.5]), names=("a", "a"))

    def test_continuous_density_quadrature_near_one(self):
        space = raised_cosine_factor_space()
        total = float(space.grid_weights @ space.density(space.grid_nodes))
        assert abs(total - 1.0) <= 1e-3

    def test_continuous_rejects_unnormalized_density(self):
        with pytest.raises(ValueError, match="deviates from 1"):
            ContinuousFactorSpace(
                dim=1,
                density=lambda pts: np.full(pts.shape[0], 2.0),
                transform=lambda u: u,
                beta=1,
                lipschitz=1.0,
            )

    def test_continuous_rejects_negative_density(self):
        with pytest.raises(ValueError, match="negative"):
            ContinuousFactorSpace(
                dim=1,
                density=lambda pts: np.cos(2 * np.pi * pts[:, 0]),
                transform=lambda u: u,
                beta=1,
                lipschitz=1.0,
            )


class TestEvaluateOutcome:
    def test_benchmark_entries(self, nondegenerate_instance):
        out = evaluate_outcome(nondegenerate_instance, 1, 1, 1)
        assert out.reward == 1.1
        assert np.array_equal(out.consumption, [2.2, 1.2])
        out = evaluate_outcome(nondegenerate_instance, 2, 1, 0)
        assert out.reward == 0.7
        assert np.array_equal(out.consumption, [1.2, 0.9])

    def test_null_action_is_free_everywhere(self, nondegenerate_instance):
        rng = np.random.default_rng(0)
        for _ in range(20):
            inst = random_finite_instance(rng)
            theta = rng.integers(inst.context.size)
            gamma = rng.integers(inst.factor.size)
            out = evaluate_outcome(inst, theta, 0, gamma)
            assert out.reward == 0.0
            assert np.all(out.consumption == 0.0)
        out = evaluate_outcome(nondegenerate_instance, 0, 0, 1)
        assert out.reward == 0.0 and np.all(out.consumption == 0.0)

    def test_unknown_labels_raise_domain_error(self, nondegenerate_instance):
        with pytest.raises(DomainError):
            evaluate_outcome(nondegenerate_instance, 7, 1, 0)
        with pytest.raises(DomainError):
            evaluate_outcome(nondegenerate_instance, 0, 1, 5)
        with pytest.raises(DomainError):
            evaluate_outcome(nondegenerate_instance, 0, 2, 0)

    def test_continuous_point_evaluation(self):
        inst = _continuous_instance()
        out = evaluate_outcome(inst, 0, 1, np.array([0.25]))
        assert out.reward == pytest.approx(0.25)
        assert out.consumption == pytest.approx([0.5 * 0.25])
        with pytest.raises(DomainError):
            evaluate_outcome(inst, 0, 1, np.array([1.5]))


def _continuous_instance(T=100):
    # reward x, consumption x/2 against the raised-cosine factor density
    return ProblemInstance(
        context=FiniteContextSpace(np.array([1.0])),
        factor=raised_cosine_factor_space(),
        rho=np.array([0.4]),
        T=T,
        reward_fn=lambda k, pts: pts[:, 0],
        consumption_fn=lambda k, pts: 0.5 * pts[None, :, 0],
        r_max=1.0,
        c_max=0.5,
    )


class TestTrueExpectations:
    def test_benchmark_row_averages(self, nondegenerate_instance):
        rvec, cmat = true_expectations(nondegenerate_instance)
        assert rvec == pytest.approx([1.0, 1.2, 0.8], abs=1e-12)
        assert cmat[:, 0] == pytest.approx([1.0, 2.0], abs=1e-12)
        assert cmat[:, 1] == pytest.approx([2.0, 1.0], abs=1e-12)

    def test_finite_matches_brute_force_exactly(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            inst = random_finite_instance(rng)
            rvec, cmat = true_expectations(inst)
            v = inst.factor.mass
            for k in range(inst.context.size):
                s = 0.0
                for g in range(inst.factor.size):
                    s += v[g] * inst.reward_matrix[k, g]
                assert rvec[k] == s
                for i in range(inst.n):
                    s = 0.0
                    for g in range(inst.factor.size):
                        s += v[g] * inst.consumption_tensor[i, k, g]
                    assert cmat[i, k] == s

    def test_point_mass_factor(self):
        inst = ProblemInstance(
            context=FiniteContextSpace(np.array([0.5, 0.5])),
            factor=FiniteFactorSpace(np.array([0.0, 1.0])),
            rho=np.array([1.0]),
            T=10,
            reward_matrix=np.array([[0.2, 0.9], [0.4, 0.3]]),
            consumption_tensor=np.array([[[0.1, 0.5], [0.2, 0.6]]]),
        )
        rvec, cmat = true_expectations(inst)
        assert rvec == pytest.approx([0.9, 0.3])
        assert cmat[0] == pytest.approx([0.5, 0.6])

    def test_continuous_quadrature_matches_closed_form(self):
        # E[x] under 1 - cos(2 pi x) on [0, 1] is 1/2
        rvec, cmat = true_expectations(_continuous_instance())
        assert abs(rvec[0] - 0.5) <= 1e-6
        assert abs(cmat[0, 0] - 0.25) <= 1e-6


class TestFluidValue:
    def test_benchmark_values(self, nondegenerate_instance, degenerate_instance):
        assert fluid_value(nondegenerate_instance) == pytest.approx(3800.0, abs=1e-6)
        assert fluid_value(degenerate_instance.with_horizon(1)) == pytest.approx(
            0.80, abs=1e-9
        )

    def test_box_only_when_budgets_dominate(self, nondegenerate_instance):
        inst = nondegenerate_instance
        val = fluid_value(inst, kappa=np.array([10.0, 10.0]))
        rvec, _ = true_expectations(inst)
        assert val == pytest.approx(inst.T * float(inst.context.mass @ rvec), abs=1e-9)

    def test_nondecreasing_in_budget(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            inst = random_finite_instance(rng)
            kappa = rng.uniform(0.1, 1.5, inst.n)
            bump = rng.uniform(0.0, 0.5, inst.n)
            lo = fluid_value(inst, kappa=kappa)
            hi = fluid_value(inst, kappa=kappa + bump)
            assert hi >= lo - 1e-9

    def test_solution_exposes_binding_set(self, nondegenerate_instance):
        sol = fluid_solution(nondegenerate_instance)
        assert sorted(sol.binding) == [0, 1]


class TestInstanceValidation:
    def test_rho_must_be_positive(self):
        with pytest.raises(ValueError, match="positive"):
            random_finite_instance(np.random.default_rng(0)).__class__(
                context=FiniteContextSpace(np.array([1.0])),
                factor=FiniteFactorSpace(np.array([1.0])),
                rho=np.array([0.0]),
                T=5,
                reward_matrix=np.array([[1.0]]),
                consumption_tensor=np.array([[[1.0]]]),
            )

    def test_matrix_shapes_checked(self):
        with pytest.raises(ValueError, match="shape"):
            ProblemInstance(
                context=FiniteContextSpace(np.array([0.5, 0.5])),
                factor=FiniteFactorSpace(np.array([1.0])),
                rho=np.array([1.0]),
                T=5,
                reward_matrix=np.array([[1.0]]),
                consumption_tensor=np.array([[[1.0]]]),
            )

    def test_bounds_spot_checked_for_continuous(self):
        with pytest.raises(ValueError, match="r_max"):
            ProblemInstance(
                context=FiniteContextSpace(np.array([1.0])),
                factor=raised_cosine_factor_space(),
                rho=np.array([1.0]),
                T=5,
                reward_fn=lambda k, pts: 2.0 * pts[:, 0],
                consumption_fn=lambda k, pts: pts[None, :, 0],
                r_max=1.0,
                c_max=1.0,
            )

    def test_instances_are_immutable(self, nondegenerate_instance):
        with pytest.raises((ValueError, AttributeError)):
            nondegenerate_instance.rho[0] = 5.0
        with pytest.raises(AttributeError):
            nondegenerate_instance.T = 7
