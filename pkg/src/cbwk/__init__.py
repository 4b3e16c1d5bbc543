"""Re-solving (certainty-equivalence) simulation for binary contextual
bandits with knapsacks: problem instances, online distribution estimation,
per-round fluid LP solving, feedback-aware policies, and a reproducible
Monte-Carlo regret harness."""

from .estimators import (
    EPANECHNIKOV,
    FOURTH_ORDER,
    KERNELS,
    DiscreteEstimator,
    ExpectationEstimate,
    KdeEstimator,
    KernelSpec,
    default_bandwidth,
    estimate_expectations,
    validate_kernel,
    weissman_threshold,
)
from .fluidlp import FluidLp, FluidSolution, LpStatus, binding_constraints, build_fluid_lp, solve_lp
from .model import (
    ContinuousFactorSpace,
    DomainError,
    FiniteContextSpace,
    FiniteFactorSpace,
    Outcome,
    ProblemInstance,
    evaluate_outcome,
    fluid_solution,
    fluid_value,
    true_expectations,
)
from .policy import (
    ActionDecision,
    FeedbackMode,
    PolicyState,
    ResolvingPolicy,
    StaticFluidPolicy,
    static_fluid_baseline,
)
from .presets import PRESETS, make_preset, paper_degenerate, paper_nondegenerate
from .simulator import (
    RegretReport,
    TrialResult,
    fit_loglog_slope,
    run_experiment,
    run_trial,
    trial_stream,
)
from .stattests import kde_rate_suite, weissman_suite

__version__ = "0.1.0"
