"""Robust estimation for first-order 2-D autoregressions.

Simulation, contamination, four estimators (least squares, M, generalized
M, and a two-stage robust estimator on an auxiliary bounded-innovation
recursion), a replication harness, and blockwise image approximation with
similarity indices.
"""

from __future__ import annotations

from .contamination import (
    AdditiveGaussian,
    ContaminatedField,
    ContaminationSpec,
    ReplaceAr,
    ReplaceStudentT,
    ReplaceWhiteNoise,
    contaminate,
)
from .errors import (
    Bmm2dError,
    DegenerateInputError,
    DomainError,
    FormatError,
    UndefinedIndexError,
)
from .estimators import (
    METHODS,
    BmmStages,
    EstimateResult,
    OptimizerConfig,
    bmm_stages,
    estimate,
    estimate_bmm,
    estimate_gm,
    estimate_ls,
    estimate_m,
    gm_weights,
    minimize_feasible,
)
from .grid import (
    ArParams,
    GaussianNoise,
    Grid2D,
    MaCoefficient,
    StudentTNoise,
    ar_residuals,
    is_feasible,
    load_csv,
    ma_coefficients,
    project_feasible,
    save_csv,
    simulate_ar2d,
)
from .imaging import (
    BlockFit,
    ImageApproximation,
    ImageGray,
    approximate_image,
    codispersion,
    cq_index,
    cq_max,
    read_pgm,
    segment_image,
    ssim,
    write_pgm,
)
from .montecarlo import (
    ExperimentConfig,
    McReport,
    emit_raw,
    emit_report,
    replication_seeds,
    run_experiment,
)
from .robust import (
    DEFAULT_FAMILY,
    RhoFamily,
    ScaleEstimate,
    bip_residuals,
    eta,
    kappa_squared,
    lambda_sq_sum,
    m_scale,
    psi_huber,
    rho1,
    rho2,
    sigma_hat_phi,
)

__version__ = "0.1.0"

__all__ = [
    "AdditiveGaussian",
    "ArParams",
    "Bmm2dError",
    "BlockFit",
    "BmmStages",
    "ContaminatedField",
    "ContaminationSpec",
    "DEFAULT_FAMILY",
    "DegenerateInputError",
    "DomainError",
    "EstimateResult",
    "ExperimentConfig",
    "FormatError",
    "GaussianNoise",
    "Grid2D",
    "ImageApproximation",
    "ImageGray",
    "MaCoefficient",
    "McReport",
    "METHODS",
    "OptimizerConfig",
    "ReplaceAr",
    "ReplaceStudentT",
    "ReplaceWhiteNoise",
    "RhoFamily",
    "ScaleEstimate",
    "StudentTNoise",
    "UndefinedIndexError",
    "approximate_image",
    "ar_residuals",
    "bip_residuals",
    "bmm_stages",
    "codispersion",
    "contaminate",
    "cq_index",
    "cq_max",
    "emit_raw",
    "emit_report",
    "estimate",
    "estimate_bmm",
    "estimate_gm",
    "estimate_ls",
    "estimate_m",
    "eta",
    "gm_weights",
    "is_feasible",
    "kappa_squared",
    "lambda_sq_sum",
    "load_csv",
    "m_scale",
    "ma_coefficients",
    "minimize_feasible",
    "project_feasible",
    "psi_huber",
    "read_pgm",
    "replication_seeds",
    "rho1",
    "rho2",
    "run_experiment",
    "save_csv",
    "segment_image",
    "sigma_hat_phi",
    "simulate_ar2d",
    "ssim",
    "write_pgm",
]
