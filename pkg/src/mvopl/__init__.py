"""Multivariate continuous-action off-policy evaluation and learning."""
from mvopl.core import (
    Deterministic,
    DiagonalGaussian,
    IsotropicGaussian,
    KernelConfig,
    LoggedDataset,
    LoggedSample,
    RngSeed,
    UniformBox,
    ValidationError,
    importance_weights,
    kernel_log_density,
    log_density,
    sample,
    scalarise,
)
from mvopl.estimators import (
    EssMethod,
    EstimatorKind,
    EvaluationReport,
    baseline_shifted_ips,
    confidence_interval,
    corrected_sample_size,
    ess,
    evaluate,
    ips_value,
    ips_variance,
    snips_value,
    snips_variance,
    support_diagnostics,
)
from mvopl.kernels import BACKEND

__version__ = "0.1.0"
