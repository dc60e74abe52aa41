"""Consistency intensity and conductivity of margin-based surrogate losses.

The psi-transform of a convex surrogate ``phi`` behaves like ``M * theta**alpha``
near zero.  ``I = 1 / alpha`` and ``S = M ** (-1 / alpha)`` convert a rate for
the excess phi-risk into a rate for the excess 0-1 risk.
"""

from .bounds import RateBound, excess_risk_bound, scheduled_bound
from .errors import (
    DomainError,
    FitRangeError,
    LossSpecError,
    PsiProfileError,
    TrainingDivergenceError,
)
from .harness import (
    ExperimentResult,
    bayes_risk,
    estimate_risks,
    run_rate_experiment,
    sample_dataset,
    tent,
    train_erm,
)
from .intensity import (
    IntensityEstimate,
    RatioVerdict,
    compare_losses,
    estimate_intensity,
    fit_intensity,
    intensity_ratio,
    verify_intensity_range,
    verify_scaling_invariance,
)
from .losses import (
    SurrogateLoss,
    check_bayes_consistency,
    check_convexity,
    derivative_at_zero,
    exponential,
    hinge,
    logistic,
    make_modified_hinge,
    parse_loss_spec,
    scale_loss,
)
from .psi import PsiProfile, build_psi_profile, optimal_conditional_risk, psi

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "ExperimentResult",
    "FitRangeError",
    "IntensityEstimate",
    "LossSpecError",
    "PsiProfile",
    "PsiProfileError",
    "RateBound",
    "RatioVerdict",
    "SurrogateLoss",
    "TrainingDivergenceError",
    "bayes_risk",
    "build_psi_profile",
    "check_bayes_consistency",
    "check_convexity",
    "compare_losses",
    "derivative_at_zero",
    "estimate_intensity",
    "estimate_risks",
    "excess_risk_bound",
    "exponential",
    "fit_intensity",
    "hinge",
    "intensity_ratio",
    "logistic",
    "make_modified_hinge",
    "optimal_conditional_risk",
    "parse_loss_spec",
    "psi",
    "run_rate_experiment",
    "sample_dataset",
    "scale_loss",
    "scheduled_bound",
    "tent",
    "train_erm",
    "verify_intensity_range",
    "verify_scaling_invariance",
]
