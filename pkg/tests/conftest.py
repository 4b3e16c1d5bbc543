import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cbwk.model import FiniteContextSpace, FiniteFactorSpace, ProblemInstance
from cbwk.presets import paper_degenerate, paper_nondegenerate


@pytest.fixture
def nondegenerate_instance():
    return paper_nondegenerate()


@pytest.fixture
def degenerate_instance():
    return paper_degenerate()


def random_finite_instance(rng, T=None, c_scale=None):
    """Random small finite/finite instance with budgets safely above the
    stopping threshold at round one."""
    k = int(rng.integers(2, 5))
    g = int(rng.integers(2, 4))
    n = int(rng.integers(1, 4))
    u = rng.random(k) + 0.1
    u /= u.sum()
    v = rng.random(g) + 0.1
    v /= v.sum()
    if c_scale is None:
        c_scale = float(rng.uniform(0.5, 2.0))
    reward = rng.random((k, g))
    cons = rng.random((n, k, g)) * c_scale
    rho = rng.uniform(0.3, 1.2, n)
    if T is None:
        T = int(rng.integers(50, 400))
    return ProblemInstance(
        context=FiniteContextSpace(u),
        factor=FiniteFactorSpace(v),
        rho=rho,
        T=T,
        reward_matrix=reward,
        consumption_tensor=cons,
    )


def random_box_lp(rng, max_contexts=4, max_resources=3):
    """Random LP data in the coefficient ranges of the oracle-equivalence
    checks: coefficients in [0, 1], budgets in [0.1, 2]."""
    nv = int(rng.integers(1, max_contexts + 1))
    m = int(rng.integers(1, max_resources + 1))
    obj = rng.random(nv)
    cons = rng.random((m, nv))
    rhs = rng.uniform(0.1, 2.0, m)
    return obj, cons, rhs
