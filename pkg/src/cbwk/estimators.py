"""Online distribution estimation: discrete frequencies and kernel density.

Discrete distributions are estimated by plain frequency counts.  Continuous
densities on [0, 1]^d use a radial kernel density estimator K(||x - X_i||/h)
with higher-order kernels for smoother density classes; the default
bandwidth decays as m^(-1/(2*beta+d)).  Both estimators share a defined
cold-start: with zero samples the discrete estimate is uniform over the
declared support and the KDE reports the uniform density 1 on the cube, so
the round-1 plug-in program is always well posed.

Estimator states are single-writer (the trial that owns them); snapshots
taken via ``copy`` may be shared freely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable

import numpy as np
from scipy import integrate

from ._native import finite_plug_in

if TYPE_CHECKING:  # pragma: no cover
    from .model import ProblemInstance

KERNEL_QUAD_TOL = 1e-6
_CHUNK_LIMIT = 4_000_000  # max pairwise-distance entries held at once


class DiscreteEstimator:
    """Frequency estimate of a distribution on labels 0..size-1."""

    def __init__(self, size: int):
        if size < 1:
            raise ValueError("support size must be >= 1")
        self.size = int(size)
        self.counts = np.zeros(self.size, dtype=np.int64)
        self.m = 0

    def update(self, label) -> "DiscreteEstimator":
        label = int(label)
        if not 0 <= label < self.size:
            raise ValueError(f"unknown label {label} for support of size {self.size}")
        self.counts[label] += 1
        self.m += 1
        return self

    def mass(self) -> np.ndarray:
        """counts/m, or the uniform cold-start mass when no samples exist."""
        if self.m == 0:
            return np.full(self.size, 1.0 / self.size)
        return self.counts / self.m

    @property
    def cold_start(self) -> bool:
        return self.m == 0

    def copy(self) -> "DiscreteEstimator":
        out = DiscreteEstimator(self.size)
        out.counts = self.counts.copy()
        out.m = self.m
        return out


def weissman_threshold(a: int, m: int, epsilon: float) -> float:
    """L1 deviation threshold sqrt(2 ln((2^a - 2)/eps) / m).

    An m-sample frequency estimate of a distribution with support size a
    deviates from the truth by at least this much (in L1) with probability
    at most eps.  Computed through a*ln(2) + log1p(-2^(1-a)) so that large
    supports neither overflow nor lose precision.
    """
    if a < 2:
        raise ValueError("support size a must be >= 2")
    if m < 1:
        raise ValueError("sample count m must be >= 1")
    if not 0.0 < epsilon < 1.0:
        raise ValueError("tail probability epsilon must lie in (0, 1)")
    log_num = a * math.log(2.0) + math.log1p(-(2.0 ** (1 - a)))
    return math.sqrt(2.0 * (log_num - math.log(epsilon)) / m)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelSpec:
    """One-dimensional kernel with declared vanishing-moment order.

    ``order`` is the highest s such that the s-th moment vanishes for all
    1 <= s <= order; a kernel is admissible for a smoothness class of order
    beta iff order >= beta.  ``support_radius`` is np.inf for unbounded
    kernels.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    order: int
    support_radius: float
    name: str


def _epanechnikov(x):
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) <= 1.0, 0.75 * (1.0 - x * x), 0.0)


def _fourth_order(x):
    x = np.asarray(x, dtype=float)
    x2 = x * x
    return np.where(np.abs(x) <= 1.0, (15.0 / 32.0) * (3.0 - 10.0 * x2 + 7.0 * x2 * x2), 0.0)


EPANECHNIKOV = KernelSpec(_epanechnikov, order=1, support_radius=1.0, name="epanechnikov")

# polynomial-corrected bell: second and third moments vanish too, at the cost
# of negative lobes, so it remains admissible up to third-order smoothness
FOURTH_ORDER = KernelSpec(_fourth_order, order=3, support_radius=1.0, name="fourth-order")

KERNELS = {k.name: k for k in (EPANECHNIKOV, FOURTH_ORDER)}


@dataclass(frozen=True)
class KernelCheck:
    condition: str
    value: float
    target: float
    tol: float

    @property
    def ok(self) -> bool:
        return math.isfinite(self.value) and abs(self.value - self.target) <= self.tol


@dataclass(frozen=True)
class KernelReport:
    kernel: str
    beta: int
    checks: tuple[KernelCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)


def validate_kernel(kernel: KernelSpec, beta: int) -> KernelReport:
    """Numerically check the admissibility conditions for order beta.

    Verifies unit mass, vanishing moments 1..beta, and a finite beta-th
    absolute moment via adaptive quadrature.  Failures are reported as
    entries, never raised.
    """
    lo, hi = -kernel.support_radius, kernel.support_radius
    checks = []

    def _quad(f):
        val, _ = integrate.quad(f, lo, hi, limit=200)
        return val

    checks.append(
        KernelCheck("unit mass", _quad(lambda x: float(kernel.fn(x))), 1.0, KERNEL_QUAD_TOL)
    )
    for s in range(1, beta + 1):
        checks.append(
            KernelCheck(
                f"vanishing moment s={s}",
                _quad(lambda x, s=s: x**s * float(kernel.fn(x))),
                0.0,
                KERNEL_QUAD_TOL,
            )
        )
    abs_moment = _quad(lambda x: abs(x) ** beta * abs(float(kernel.fn(x))))
    checks.append(
        KernelCheck(
            f"finite absolute moment s={beta}",
            0.0 if math.isfinite(abs_moment) else math.inf,
            0.0,
            KERNEL_QUAD_TOL,
        )
    )
    return KernelReport(kernel.name, beta, tuple(checks))


def default_bandwidth(m: int, beta: int, dim: int, c_h: float = 1.0) -> float:
    """Rate-consistent bandwidth c_h * m^(-1/(2*beta + dim))."""
    if m < 2:
        raise ValueError("bandwidth rule needs m >= 2; cold start is handled upstream")
    if beta < 1 or dim < 1:
        raise ValueError("beta and dim must be >= 1")
    if c_h <= 0.0:
        raise ValueError("bandwidth constant c_h must be positive")
    return c_h * m ** (-1.0 / (2.0 * beta + dim))


class KdeEstimator:
    """Radial kernel density estimator over points in [0, 1]^dim.

    Raw densities may be negative with higher-order kernels; consumers that
    need a proper distribution use ``normalized_density_grid``, which clamps
    at zero and renormalizes on a quadrature grid.
    """

    def __init__(
        self,
        dim: int,
        kernel: KernelSpec = FOURTH_ORDER,
        beta: int = 2,
        c_h: float = 1.0,
    ):
        if dim < 1:
            raise ValueError("dimension must be >= 1")
        if kernel.order < beta:
            raise ValueError(
                f"kernel {kernel.name!r} (order {kernel.order}) is not admissible "
                f"for smoothness beta={beta}"
            )
        self.dim = int(dim)
        self.kernel = kernel
        self.beta = int(beta)
        self.c_h = float(c_h)
        self._buf = np.empty((64, self.dim))
        self.m = 0

    @property
    def cold_start(self) -> bool:
        return self.m == 0

    @property
    def samples(self) -> np.ndarray:
        return self._buf[: self.m]

    def update(self, point) -> "KdeEstimator":
        point = np.asarray(point, dtype=float).reshape(-1)
        if point.size != self.dim:
            raise ValueError(f"point has dimension {point.size}, expected {self.dim}")
        if np.any(point < -1e-12) or np.any(point > 1.0 + 1e-12):
            raise ValueError("sample point outside the unit cube")
        if self.m == self._buf.shape[0]:
            grown = np.empty((2 * self._buf.shape[0], self.dim))
            grown[: self.m] = self._buf
            self._buf = grown
        self._buf[self.m] = np.clip(point, 0.0, 1.0)
        self.m += 1
        return self

    def extend(self, points) -> "KdeEstimator":
        for p in np.asarray(points, dtype=float).reshape(-1, self.dim):
            self.update(p)
        return self

    def copy(self) -> "KdeEstimator":
        out = KdeEstimator(self.dim, self.kernel, self.beta, self.c_h)
        out._buf = self._buf.copy()
        out.m = self.m
        return out

    def bandwidth(self) -> float:
        """Default decaying bandwidth at the current sample count."""
        return default_bandwidth(max(self.m, 2), self.beta, self.dim, self.c_h)

    def density(self, x, h: float | None = None) -> float:
        """Raw KDE value at a single point (1.0 on cold start)."""
        if self.m == 0:
            return 1.0
        return float(self.density_grid(np.asarray(x, dtype=float).reshape(1, -1), h)[0])

    def density_grid(self, points: np.ndarray, h: float | None = None) -> np.ndarray:
        """Raw KDE values on an (N, dim) array of points."""
        points = np.asarray(points, dtype=float).reshape(-1, self.dim)
        if self.m == 0:
            return np.ones(points.shape[0])
        if h is None:
            h = self.bandwidth()
        if h <= 0.0:
            raise ValueError("bandwidth must be positive")
        scale = 1.0 / (self.m * h**self.dim)
        out = np.empty(points.shape[0])
        chunk = max(1, _CHUNK_LIMIT // max(self.m, 1))
        for lo in range(0, points.shape[0], chunk):
            block = points[lo : lo + chunk]
            dist = np.linalg.norm(block[:, None, :] - self.samples[None, :, :], axis=2)
            out[lo : lo + chunk] = scale * self.kernel.fn(dist / h).sum(axis=1)
        return out

    def normalized_density_grid(
        self, nodes: np.ndarray, weights: np.ndarray, h: float | None = None
    ) -> np.ndarray:
        """Clamped-at-zero KDE rescaled to integrate to 1 on the given grid."""
        vals = np.maximum(self.density_grid(nodes, h), 0.0)
        total = float(weights @ vals)
        if total <= 1e-12:
            # all mass clipped away (tiny bandwidth between grid nodes)
            return np.ones(nodes.shape[0])
        return vals / total


# ---------------------------------------------------------------------------
# plug-in expectations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExpectationEstimate:
    """Estimated R(theta) and C(theta) with the sample count that built them."""

    rhat: np.ndarray
    chat: np.ndarray
    m: int


def estimate_expectations(v_state, instance: "ProblemInstance") -> ExpectationEstimate:
    """Plug the estimated factor distribution into the known outcome functions.

    Finite factor spaces take the exact weighted sum under the frequency
    mass; continuous ones integrate the reward/consumption functions against
    the grid-renormalized KDE.  Entries are clamped to the instance's
    declared [0, r_max] and [0, c_max] ranges.
    """
    k = instance.context.size
    n = instance.n
    rhat = np.empty(k)
    chat = np.empty((n, k))
    if instance.is_finite_factor:
        if not isinstance(v_state, DiscreteEstimator):
            raise TypeError("finite factor spaces require a DiscreteEstimator")
        finite_plug_in(
            v_state.mass(),
            instance.reward_matrix,
            instance.consumption_tensor,
            instance.r_max,
            instance.c_max,
            rhat,
            chat,
        )
        return ExpectationEstimate(rhat, chat, v_state.m)
    if not isinstance(v_state, KdeEstimator):
        raise TypeError("continuous factor spaces require a KdeEstimator")
    space = instance.factor
    nodes = space.grid_nodes
    weighted = space.grid_weights * v_state.normalized_density_grid(
        nodes, space.grid_weights
    )
    for j in range(k):
        r = float(weighted @ np.asarray(instance.reward_fn(j, nodes), dtype=float))
        rhat[j] = min(max(r, 0.0), instance.r_max)
        c = np.asarray(instance.consumption_fn(j, nodes), dtype=float) @ weighted
        chat[:, j] = np.clip(c, 0.0, instance.c_max)
    return ExpectationEstimate(rhat, chat, v_state.m)
