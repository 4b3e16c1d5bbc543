"""Problem instances for binary contextual bandits with knapsacks.

An instance bundles a finite context space, an external-factor space
(finite, or continuous on the unit cube), known reward/consumption
functions, per-resource average budgets, and a horizon.  Rewards and
consumption are only incurred on the active action; the null action is
always free.  All types are immutable after construction and safe to share
across concurrently running trials.

The factor space determines how reward/consumption are represented:

* finite factors: a (contexts x factors) reward matrix and one such matrix
  per resource, stacked into a (resources x contexts x factors) tensor;
* continuous factors: vectorized callables evaluated on points in
  [0, 1]^dim, integrated on a fixed tensor-product trapezoid grid
  (default 512 nodes per axis, configurable per space).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from . import fluidlp
from ._native import finite_plug_in

MASS_TOL = 1e-12
DENSITY_QUAD_TOL = 1e-3


class DomainError(ValueError):
    """A context/factor label or point outside the declared space."""


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _check_mass(mass: np.ndarray, what: str) -> None:
    if mass.ndim != 1 or mass.size == 0:
        raise ValueError(f"{what} mass must be a nonempty vector")
    if np.any(mass < 0.0) or np.any(mass > 1.0):
        raise ValueError(f"{what} mass entries must lie in [0, 1]")
    if abs(float(mass.sum()) - 1.0) > MASS_TOL:
        raise ValueError(f"{what} mass must sum to 1 within {MASS_TOL}")


@dataclass(frozen=True)
class FiniteContextSpace:
    """Finite context support with mass vector; labels are indices 0..K-1."""

    mass: np.ndarray
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "mass", _frozen_array(self.mass))
        _check_mass(self.mass, "context")
        if self.names is not None:
            names = tuple(self.names)
            if len(names) != self.mass.size:
                raise ValueError("context names do not match support size")
            if len(set(names)) != len(names):
                raise ValueError("context names must be distinct")
            object.__setattr__(self, "names", names)

    @property
    def size(self) -> int:
        return self.mass.size

    @cached_property
    def cumulative(self) -> np.ndarray:
        return _frozen_array(np.cumsum(self.mass))


@dataclass(frozen=True)
class FiniteFactorSpace:
    """Finite external-factor support with mass vector; labels are indices."""

    mass: np.ndarray
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "mass", _frozen_array(self.mass))
        _check_mass(self.mass, "factor")
        if self.names is not None:
            names = tuple(self.names)
            if len(names) != self.mass.size:
                raise ValueError("factor names do not match support size")
            if len(set(names)) != len(names):
                raise ValueError("factor names must be distinct")
            object.__setattr__(self, "names", names)

    @property
    def size(self) -> int:
        return self.mass.size

    @cached_property
    def cumulative(self) -> np.ndarray:
        return _frozen_array(np.cumsum(self.mass))


@dataclass(frozen=True)
class ContinuousFactorSpace:
    """Continuous factor distribution on [0, 1]^dim with a smooth density.

    ``density`` maps an (N, dim) array of points to the (N,) density values;
    ``transform`` maps an (N, dim) array of uniform draws to sample points
    (inverse-CDF style, one uniform consumed per dimension, which keeps
    trial randomness streams aligned across feedback modes).  ``beta`` and
    ``lipschitz`` declare the Hoelder smoothness class of the density and
    drive the default KDE bandwidth downstream.
    """

    dim: int
    density: Callable[[np.ndarray], np.ndarray]
    transform: Callable[[np.ndarray], np.ndarray]
    beta: int
    lipschitz: float
    grid_per_axis: int = 512
    name: str | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("factor dimension must be >= 1")
        if self.beta < 1:
            raise ValueError("smoothness order beta must be >= 1")
        if self.grid_per_axis < 2:
            raise ValueError("grid resolution must be >= 2 nodes per axis")
        if self.grid_per_axis**self.dim > 2_000_000:
            raise ValueError("quadrature grid too large; lower grid_per_axis")
        vals = self.density(self.grid_nodes)
        if np.any(vals < -1e-12):
            raise ValueError("density is negative on the quadrature grid")
        total = float(self.grid_weights @ np.maximum(vals, 0.0))
        if abs(total - 1.0) > DENSITY_QUAD_TOL:
            raise ValueError(
                f"density quadrature {total:.6f} deviates from 1 by more "
                f"than {DENSITY_QUAD_TOL}"
            )

    @cached_property
    def _axis_grid(self) -> tuple[np.ndarray, np.ndarray]:
        nodes = np.linspace(0.0, 1.0, self.grid_per_axis)
        weights = np.full(self.grid_per_axis, 1.0 / (self.grid_per_axis - 1))
        weights[0] *= 0.5
        weights[-1] *= 0.5
        return nodes, weights

    @cached_property
    def grid_nodes(self) -> np.ndarray:
        """Tensor-product quadrature nodes, shape (grid_per_axis**dim, dim)."""
        nodes, _ = self._axis_grid
        mesh = np.meshgrid(*([nodes] * self.dim), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        return _frozen_array(pts)

    @cached_property
    def grid_weights(self) -> np.ndarray:
        """Trapezoid weights matching ``grid_nodes``."""
        _, w = self._axis_grid
        out = w
        for _ in range(self.dim - 1):
            out = np.multiply.outer(out, w)
        return _frozen_array(out.ravel())

    @property
    def size(self) -> int:
        raise TypeError("continuous factor space has no finite support size")


@dataclass(frozen=True)
class Outcome:
    """Realized reward and per-resource consumption of one round."""

    reward: float
    consumption: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "consumption", _frozen_array(self.consumption))


@dataclass(frozen=True)
class ProblemInstance:
    """Full environment description.

    ``rho`` holds the per-resource average budget rates; the initial budget
    is ``rho * T``.  ``r_max``/``c_max`` are the declared upper bounds of
    the reward and consumption functions (defaulting to the observed matrix
    maxima for finite factor spaces); the policy's stopping threshold is
    derived from ``c_max``, so instances with consumption above 1 remain
    overdraft-safe.
    """

    context: FiniteContextSpace
    factor: FiniteFactorSpace | ContinuousFactorSpace
    rho: np.ndarray
    T: int
    reward_matrix: np.ndarray | None = None
    consumption_tensor: np.ndarray | None = None
    reward_fn: Callable[[int, np.ndarray], np.ndarray] | None = None
    consumption_fn: Callable[[int, np.ndarray], np.ndarray] | None = None
    r_max: float | None = None
    c_max: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "rho", _frozen_array(self.rho))
        if self.rho.ndim != 1 or self.rho.size == 0:
            raise ValueError("rho must be a nonempty vector")
        if np.any(self.rho <= 0.0):
            raise ValueError("budget rates rho must be strictly positive")
        if int(self.T) < 1:
            raise ValueError("horizon T must be a positive integer")
        object.__setattr__(self, "T", int(self.T))

        if self.is_finite_factor:
            if self.reward_matrix is None or self.consumption_tensor is None:
                raise ValueError(
                    "finite factor spaces need reward_matrix and consumption_tensor"
                )
            rmat = _frozen_array(self.reward_matrix)
            ctens = _frozen_array(self.consumption_tensor)
            k, g = self.context.size, self.factor.size
            if rmat.shape != (k, g):
                raise ValueError(f"reward matrix must have shape {(k, g)}")
            if ctens.shape != (self.n, k, g):
                raise ValueError(
                    f"consumption tensor must have shape {(self.n, k, g)}"
                )
            object.__setattr__(self, "reward_matrix", rmat)
            object.__setattr__(self, "consumption_tensor", ctens)
            r_max = self.r_max if self.r_max is not None else float(rmat.max())
            c_max = self.c_max if self.c_max is not None else float(ctens.max())
            object.__setattr__(self, "r_max", float(r_max))
            object.__setattr__(self, "c_max", float(c_max))
            if np.any(rmat < 0.0) or float(rmat.max()) > self.r_max + 1e-12:
                raise ValueError("reward matrix entries must lie in [0, r_max]")
            if np.any(ctens < 0.0) or float(ctens.max()) > self.c_max + 1e-12:
                raise ValueError("consumption entries must lie in [0, c_max]")
        else:
            if self.reward_fn is None or self.consumption_fn is None:
                raise ValueError(
                    "continuous factor spaces need reward_fn and consumption_fn"
                )
            if self.r_max is None or self.c_max is None:
                raise ValueError(
                    "continuous factor spaces need explicit r_max and c_max"
                )
            object.__setattr__(self, "r_max", float(self.r_max))
            object.__setattr__(self, "c_max", float(self.c_max))
            self._spot_check_bounds()

    def _spot_check_bounds(self, points_per_context: int = 64) -> None:
        # continuous functions cannot be checked exhaustively; sample the grid
        nodes = self.factor.grid_nodes
        stride = max(1, nodes.shape[0] // points_per_context)
        sample = nodes[::stride]
        for k in range(self.context.size):
            r = np.asarray(self.reward_fn(k, sample), dtype=float)
            c = np.asarray(self.consumption_fn(k, sample), dtype=float)
            if r.shape != (sample.shape[0],):
                raise ValueError("reward_fn must return one value per point")
            if c.shape != (self.n, sample.shape[0]):
                raise ValueError(
                    "consumption_fn must return an (n, npoints) array"
                )
            if np.any(r < -1e-12) or np.any(r > self.r_max + 1e-9):
                raise ValueError("reward_fn leaves the declared [0, r_max] range")
            if np.any(c < -1e-12) or np.any(c > self.c_max + 1e-9):
                raise ValueError(
                    "consumption_fn leaves the declared [0, c_max] range"
                )

    @property
    def n(self) -> int:
        """Number of resources."""
        return self.rho.size

    @property
    def is_finite_factor(self) -> bool:
        return isinstance(self.factor, FiniteFactorSpace)

    def with_horizon(self, T: int) -> "ProblemInstance":
        return dataclasses.replace(self, T=T)


def _validate_context(instance: ProblemInstance, theta) -> int:
    theta = int(theta)
    if not 0 <= theta < instance.context.size:
        raise DomainError(f"unknown context label {theta}")
    return theta


def _validate_factor(instance: ProblemInstance, gamma):
    if instance.is_finite_factor:
        g = int(gamma)
        if not 0 <= g < instance.factor.size:
            raise DomainError(f"unknown factor label {g}")
        return g
    point = np.asarray(gamma, dtype=float).reshape(-1)
    if point.size != instance.factor.dim:
        raise DomainError(
            f"factor point has dimension {point.size}, expected {instance.factor.dim}"
        )
    if np.any(point < -1e-12) or np.any(point > 1.0 + 1e-12):
        raise DomainError("factor point outside the unit cube")
    return point


def evaluate_outcome(instance: ProblemInstance, theta, a: int, gamma) -> Outcome:
    """Realize (reward, consumption) for context theta, action a, factor gamma.

    The null action yields exactly zero reward and zero consumption.
    """
    theta = _validate_context(instance, theta)
    if a not in (0, 1):
        raise DomainError(f"action must be 0 or 1, got {a!r}")
    gamma = _validate_factor(instance, gamma)
    if a == 0:
        return Outcome(0.0, np.zeros(instance.n))
    if instance.is_finite_factor:
        return Outcome(
            float(instance.reward_matrix[theta, gamma]),
            instance.consumption_tensor[:, theta, gamma].copy(),
        )
    pts = gamma[None, :]
    reward = float(np.asarray(instance.reward_fn(theta, pts), dtype=float)[0])
    cons = np.asarray(instance.consumption_fn(theta, pts), dtype=float)[:, 0]
    return Outcome(reward, cons)


def true_expectations(instance: ProblemInstance) -> tuple[np.ndarray, np.ndarray]:
    """Expected active-action reward R(theta) and consumption C(theta).

    Finite factor spaces are summed exactly; continuous ones are integrated
    against the true density on the space's trapezoid grid (error below
    1e-6 for smooth integrands at the default resolution).
    """
    k = instance.context.size
    n = instance.n
    rvec = np.empty(k)
    cmat = np.empty((n, k))
    if instance.is_finite_factor:
        finite_plug_in(
            instance.factor.mass,
            instance.reward_matrix,
            instance.consumption_tensor,
            instance.r_max,
            instance.c_max,
            rvec,
            cmat,
        )
        return rvec, cmat
    nodes = instance.factor.grid_nodes
    wts = instance.factor.grid_weights * instance.factor.density(nodes)
    for j in range(k):
        rvec[j] = float(wts @ np.asarray(instance.reward_fn(j, nodes), dtype=float))
        cmat[:, j] = np.asarray(instance.consumption_fn(j, nodes), dtype=float) @ wts
    return rvec, cmat


def fluid_solution(instance: ProblemInstance, kappa=None) -> "fluidlp.FluidSolution":
    """Solve the distributional relaxation at budget rates kappa (default rho)."""
    rvec, cmat = true_expectations(instance)
    kappa = instance.rho if kappa is None else np.asarray(kappa, dtype=float)
    lp = fluidlp.build_fluid_lp(instance.context.mass, (rvec, cmat), kappa)
    sol = fluidlp.solve_lp(lp)
    if sol.status is not fluidlp.LpStatus.OPTIMAL:
        raise ArithmeticError("fluid relaxation solve failed numerically")
    return sol


def fluid_value(instance: ProblemInstance, kappa=None) -> float:
    """T times the optimal value of the distributional relaxation.

    This benchmark upper-bounds the expected reward of any online policy,
    so reported regrets should not be significantly negative.
    """
    return instance.T * fluid_solution(instance, kappa).objective
