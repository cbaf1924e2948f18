"""Mahalanobis distance estimation by optimal eigenvalue shrinkage of the sample covariance."""

__version__ = "0.1.0"

from .errors import ConfigurationError, DomainError, PreconditionError, SimulationError
from .linalg import (
    EigenSystem,
    GroundTruth,
    SampleSet,
    mahalanobis_sq,
    op_norm_diff,
    sample_covariance,
    shrinkage_loss,
    sym_eig,
    truth_from_spikes,
)
from .rmt import (
    AspectRatio,
    SpikedModel,
    asymptotic_loss,
    bulk_edges,
    cosine,
    delta_loss,
    ell_inv,
    lambda_fwd,
    mp_density,
    optimal_delta,
    sine,
)
from .shrinkers import PrecisionEstimate, ShrinkageRule, Threshold, apply_rule, eta_classical, eta_optimal
