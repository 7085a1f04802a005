"""Distortion-rate-perception tradeoff for Gaussian sources under squared
error and squared Wasserstein-2 perception, with common randomness."""

from .scalar import (
    bracket,
    common_randomness_threshold_C,
    dstar_scalar,
    dstar_scalar_c0,
    dstar_value,
    perception_gap,
    perception_threshold_P,
    psi,
    rate_threshold_R,
    shannon_dr,
)
from .simulator import (
    BudgetExceeded,
    CodebookConfig,
    EstimatorConfig,
    SimulationResult,
    TestChannels,
    build_codebook,
    likelihood_encode,
    reconstruct,
    run_trials,
    soft_covering_gap,
    soft_covering_sweep,
)
from .transport import (
    DPPoint,
    GaussianMoments,
    dp_tradeoff_point,
    interpolate_reconstruction,
    interpolation_weight,
    w2_empirical_1d,
    w2_gaussian,
)
from .types import (
    INF,
    DiagGaussianSource,
    DimensionMismatch,
    DomainError,
    GaussianCoupling,
    GaussianScalarSource,
    NegativeRate,
    NegativeVariance,
    NoFiniteThreshold,
    NonFiniteInput,
    RateAllocation,
    TradeoffPoint,
    TradeoffQuery,
    WRDPError,
    validate_query,
)
from .vector import (
    AllocationSolution,
    ConvergenceFailure,
    brute_force_oracle,
    grid_resolution_bound,
    objective,
    reverse_waterfill_alpha,
    solve_allocation,
    universality_gap,
    waterfill_beta,
)

__version__ = "0.1.0"
