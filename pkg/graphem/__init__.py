"""Sparse transition-matrix estimation for linear-Gaussian state-space models (GraphEM and MLEM)."""
from .em import (
    FitResult,
    FitTrace,
    GraphemConfig,
    default_initializer,
    gamma_max,
    graphem_fit,
    graphem_mstep,
    mlem_fit,
    mlem_mstep,
)
from .errors import (
    ConfigError,
    DatasetSpecError,
    EMIterationError,
    FilterDivergenceError,
    GraphemError,
    InputFormatError,
    ModelValidationError,
    SingularSystemError,
)
from .estep import EStepStats, compute_estep_stats, majorizer_value
from .inference import FilterPass, SmootherPass, kalman_filter, map_objective, rts_smoother
from .metrics import EdgeScores, aggregate, edge_scores, rmse
from .model import (
    PRESETS,
    Dataset,
    DatasetSpec,
    KnownParameters,
    LgssmModel,
    Trajectory,
    make_dataset,
    project_spectral_norm,
    random_block_ar1_matrix,
    simulate,
    validate_model,
)
from .prox import DrConfig, QuadraticProxProblem, douglas_rachford, prox_quadratic, soft_threshold

__version__ = "0.1.0"
