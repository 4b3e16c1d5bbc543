"""Finite-context fluid linear program: build, solve, and inspect bindings.

The program maximizes sum_theta u(theta) R(theta) phi(theta) over controls
0 <= phi <= 1 subject to sum_theta u(theta) C(theta) phi(theta) <= kappa.
Problems are tiny (contexts in the dozens, a handful of resources), so the
solver is a dense bounded-variable primal simplex with Bland's rule: fully
deterministic for a fixed input, robust to the degenerate optima that drive
the interesting regret regimes, and fast enough to be re-solved every round
of a simulated trial.  Duals are the basis duals; at degenerate vertices
they are one valid choice among several and no uniqueness is claimed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from ._native import LP_OPTIMAL, solve_box_lp

if TYPE_CHECKING:  # pragma: no cover
    from .estimators import ExpectationEstimate

BINDING_TOL = 1e-7


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    NUMERIC_FAILURE = "numeric-failure"


@dataclass(frozen=True)
class FluidLp:
    """Assembled LP data: objective w, constraint matrix A, budgets kappa.

    All objective and constraint coefficients are nonnegative (they are
    probability-weighted rewards/consumptions); kappa is nonnegative, with
    zero entries permitted because the policy clamps depleted budget rates
    at zero, turning the matching constraint into "consume nothing".
    """

    obj: np.ndarray
    cons: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        obj = np.ascontiguousarray(self.obj, dtype=float)
        cons = np.ascontiguousarray(self.cons, dtype=float)
        rhs = np.ascontiguousarray(self.rhs, dtype=float)
        if obj.ndim != 1 or cons.ndim != 2 or rhs.ndim != 1:
            raise ValueError("obj and rhs must be vectors, cons a matrix")
        if cons.shape != (rhs.size, obj.size):
            raise ValueError(
                f"constraint matrix shape {cons.shape} does not match "
                f"{(rhs.size, obj.size)}"
            )
        if np.any(obj < 0.0) or np.any(cons < 0.0):
            raise ValueError("objective and constraint coefficients must be >= 0")
        if np.any(rhs < 0.0):
            raise ValueError("budget vector must be nonnegative")
        for name, arr in (("obj", obj), ("cons", cons), ("rhs", rhs)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_contexts(self) -> int:
        return self.obj.size

    @property
    def n_resources(self) -> int:
        return self.rhs.size


@dataclass(frozen=True)
class FluidSolution:
    """Primal control, resource duals, objective, and binding constraints."""

    phi: np.ndarray
    lam: np.ndarray
    objective: float
    binding: frozenset[int]
    status: LpStatus

    def __post_init__(self):
        for name in ("phi", "lam"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def build_fluid_lp(u, est, kappa) -> FluidLp:
    """Assemble the fluid LP from a context mass and expectation estimates.

    ``est`` is an ExpectationEstimate or a plain ``(R, C)`` pair with R of
    shape (contexts,) and C of shape (resources, contexts).  Coefficients:
    obj[k] = u[k] * R[k] and cons[i, k] = u[k] * C[i, k].
    """
    u = np.asarray(u, dtype=float)
    if isinstance(est, tuple):
        rhat, chat = est
    else:
        rhat, chat = est.rhat, est.chat
    rhat = np.asarray(rhat, dtype=float)
    chat = np.asarray(chat, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    if u.shape != rhat.shape or chat.shape != (kappa.size, u.size):
        raise ValueError(
            f"dimension mismatch: u {u.shape}, R {rhat.shape}, C {chat.shape}, "
            f"kappa {kappa.shape}"
        )
    return FluidLp(obj=u * rhat, cons=u[None, :] * chat, rhs=kappa)


def solve_lp(lp: FluidLp) -> FluidSolution:
    """Solve the LP; never infeasible since phi = 0 is always feasible.

    Numeric breakdown (pivot collapse or an iteration blowup) is reported
    through the status field rather than an exception so the policy can
    fall back to the null action mid-trial.
    """
    phi = np.zeros(lp.n_contexts)
    lam = np.zeros(lp.n_resources)
    status, objective = solve_box_lp(lp.obj, lp.cons, lp.rhs, phi, lam)
    if status != LP_OPTIMAL:
        return FluidSolution(
            phi=np.zeros(lp.n_contexts),
            lam=np.zeros(lp.n_resources),
            objective=0.0,
            binding=frozenset(),
            status=LpStatus.NUMERIC_FAILURE,
        )
    sol = FluidSolution(
        phi=phi,
        lam=lam,
        objective=objective,
        binding=frozenset(),
        status=LpStatus.OPTIMAL,
    )
    binding = binding_constraints(sol, lp.rhs, lp.cons, BINDING_TOL)
    object.__setattr__(sol, "binding", binding)
    return sol


def binding_constraints(
    sol: FluidSolution, kappa, cons, tol: float = BINDING_TOL
) -> frozenset[int]:
    """Resource indices whose slack kappa_i - (A phi)_i is at most tol."""
    if sol.status is not LpStatus.OPTIMAL:
        raise ValueError("binding constraints are defined for optimal solutions")
    kappa = np.asarray(kappa, dtype=float)
    cons = np.asarray(cons, dtype=float)
    slack = kappa - cons @ sol.phi
    return frozenset(int(i) for i in np.nonzero(slack <= tol)[0])
