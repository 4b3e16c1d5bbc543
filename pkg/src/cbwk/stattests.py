"""Statistical test harness for the distribution estimators.

Two suites, both Monte-Carlo:

* ``weissman_suite`` draws repeated m-sample frequency estimates of a fixed
  discrete distribution and checks that the empirical rate of L1 deviations
  beyond the concentration threshold stays within the declared tail
  probability (plus binomial slack).
* ``kde_rate_suite`` fits kernel density estimates of a smooth reference
  density at increasing sample counts and checks that the median sup-norm
  grid error strictly decreases -- the qualitative form of the consistency
  rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimators import FOURTH_ORDER, KdeEstimator, KernelSpec, default_bandwidth, weissman_threshold
from .presets import raised_cosine_factor_space

DEFAULT_WEISSMAN_MASS = (0.4, 0.3, 0.2, 0.1)


@dataclass(frozen=True)
class WeissmanRow:
    rep: int
    m: int
    l1_error: float
    threshold: float
    violated: bool


@dataclass(frozen=True)
class WeissmanSuiteResult:
    rows: tuple[WeissmanRow, ...]
    support_size: int
    m: int
    epsilon: float
    threshold: float
    violation_rate: float
    rate_limit: float

    @property
    def passed(self) -> bool:
        return self.violation_rate <= self.rate_limit


def weissman_suite(
    mass=DEFAULT_WEISSMAN_MASS,
    m: int = 1000,
    epsilon: float = 0.1,
    reps: int = 2000,
    seed: int = 0,
    rate_limit: float = 0.12,
) -> WeissmanSuiteResult:
    """Empirical check of the L1 concentration bound for frequency estimates.

    Each repetition aggregates m i.i.d. draws from ``mass`` into counts (a
    multinomial draw) and records whether the L1 error reaches the
    threshold.  The bound guarantees violation probability at most
    ``epsilon``; ``rate_limit`` adds binomial slack for the finite number
    of repetitions.
    """
    mass = np.asarray(mass, dtype=float)
    if reps < 1:
        raise ValueError("need at least one repetition")
    a = mass.size
    thr = weissman_threshold(a, m, epsilon)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    counts = rng.multinomial(m, mass, size=reps)
    l1 = np.abs(counts / m - mass[None, :]).sum(axis=1)
    violated = l1 >= thr
    rows = tuple(
        WeissmanRow(rep=i, m=m, l1_error=float(l1[i]), threshold=thr, violated=bool(violated[i]))
        for i in range(reps)
    )
    return WeissmanSuiteResult(
        rows=rows,
        support_size=a,
        m=m,
        epsilon=epsilon,
        threshold=thr,
        violation_rate=float(violated.mean()),
        rate_limit=rate_limit,
    )


@dataclass(frozen=True)
class KdeRateRow:
    rep: int
    m: int
    sup_error: float


@dataclass(frozen=True)
class KdeRateSuiteResult:
    rows: tuple[KdeRateRow, ...]
    sample_sizes: tuple[int, ...]
    median_errors: tuple[float, ...]
    reps: int
    kernel: str
    beta: int
    c_h: float

    @property
    def passed(self) -> bool:
        meds = self.median_errors
        return all(meds[i + 1] < meds[i] for i in range(len(meds) - 1))


def kde_rate_suite(
    sample_sizes=(100, 10000),
    reps: int = 50,
    seed: int = 0,
    kernel: KernelSpec = FOURTH_ORDER,
    beta: int = 2,
    c_h: float = 1.0,
    grid_per_axis: int = 512,
) -> KdeRateSuiteResult:
    """Monotone-error check of the KDE against the raised-cosine density.

    For each sample count m, draws ``reps`` independent sample sets, fits
    the estimator at the default bandwidth, and records the sup error over
    the quadrature grid against the true density.  Passing means the median
    sup error strictly decreases along ``sample_sizes``.
    """
    sample_sizes = tuple(int(m) for m in sample_sizes)
    if reps < 1:
        raise ValueError("need at least one repetition")
    if len(sample_sizes) < 2 or any(
        b <= a for a, b in zip(sample_sizes, sample_sizes[1:])
    ):
        raise ValueError("sample sizes must be strictly increasing, at least two")
    space = raised_cosine_factor_space(grid_per_axis=grid_per_axis)
    nodes = space.grid_nodes
    truth = space.density(nodes)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))

    rows = []
    medians = []
    for m in sample_sizes:
        errs = np.empty(reps)
        for rep in range(reps):
            est = KdeEstimator(dim=1, kernel=kernel, beta=beta, c_h=c_h)
            pts = space.transform(rng.random(m))
            est.extend(pts)
            h = default_bandwidth(m, beta, 1, c_h)
            errs[rep] = float(np.max(np.abs(est.density_grid(nodes, h) - truth)))
            rows.append(KdeRateRow(rep=rep, m=m, sup_error=errs[rep]))
        medians.append(float(np.median(errs)))

    return KdeRateSuiteResult(
        rows=tuple(rows),
        sample_sizes=sample_sizes,
        median_errors=tuple(medians),
        reps=reps,
        kernel=kernel.name,
        beta=beta,
        c_h=c_h,
    )
