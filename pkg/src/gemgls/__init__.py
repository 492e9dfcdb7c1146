"""Mean and sample-covariance estimation for matrix-variate two-group data.

Generalized least squares group means with penalized estimates of the
sample-wise (row) inverse covariance, from data ``X = M + B^{1/2} Z A^{1/2}``.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .covmodel import (
    DataMatrix,
    KroneckerModel,
    MeanSpec,
    ar1_correlation,
    correlation_from_spec,
    erdos_renyi_correlation,
    normalize_kronecker,
    sample_matrix_variate,
    star_block_correlation,
    twin_pair_correlation,
)
from .design import TwoGroupDesign
from .errors import (
    ConvergenceError,
    DegenerateVarianceError,
    GemglsError,
    InvalidParameterError,
    ParseError,
    PreconditionError,
    SingularDesignError,
    SingularInputError,
    TooFewValuesError,
    UndefinedROCError,
)
from .evaluation import (
    SimConfig,
    SimReport,
    calibration_quantiles,
    estimation_metrics,
    roc_curve,
    run_simulation,
    structure_metrics,
)
from .gemini import center, fit_gemini, kronecker_estimate
from .glasso import PenalizedPrecisionFit, SolverConfig, glasso_fit
from .gls import bh_adjust, design_effect, gls_fit, ols_fit, paired_t, sd_ratio, unpaired_t
from .pipeline import (
    Alg2Config,
    PenaltyPolicy,
    algorithm1,
    algorithm2,
    penalty_value,
    stability_iteration,
)
