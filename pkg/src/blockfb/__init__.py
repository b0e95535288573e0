"""Parallel random block-coordinate forward-backward solver."""
from .core import BlockPartition, BlockVector, DiagonalMetric, MetricKind, ValidationError, masked_update, weighted_norm_sq
from .problems import (
    CompositeProblem,
    make_lasso,
    make_min_norm_dual,
    make_ridge_dual,
    make_svm_dual,
    soft_threshold,
)
from .sampling import (
    BetaConstants,
    SamplingScheme,
    Sampler,
    beta_by_enumeration,
    beta_doubly_uniform,
    beta_tau_nice,
    draw,
    marginals,
)
from .smoothness import (
    SeparabilityStructure,
    SmoothnessCertificate,
    global_lipschitz_bounds,
    nu_s1,
    nu_s1_refined,
    nu_s2,
    nu_s3,
    verify_eso_s1,
    verify_eso_s2,
)
from .solver import SolverConfig, reference_solve, run, run_ensemble, step, step_monotone

__version__ = "0.1.0"
