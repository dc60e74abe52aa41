"""Power-law behaviour of psi near the origin.

Near ``theta = 0`` a consistent convex loss has ``psi(theta) ~ M * theta**alpha``.
The consistency intensity is ``I = 1 / alpha`` and the conductivity is
``S = M ** (-1 / alpha)``; together they turn an ``O(n**-p)`` excess
phi-risk into an ``O(S / n**(p * I))`` excess 0-1 risk.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FitRangeError
from .losses import SurrogateLoss, scale_loss
from .psi import DEFAULT_Z_WINDOW, PsiProfile, build_psi_profile

THETA_MIN = 1e-3
THETA_MAX = 1e-1
FIT_POINTS = 32
MIN_FIT_POINTS = 8
R2_ACCEPT = 0.9999
ALPHA_EQUAL_TOL = 0.02
INTENSITY_SLACK = 0.02

# adaptive window: shrink while the log-log slope still drifts across the window
SLOPE_DRIFT_TOL = 0.02
SHRINK_FACTOR = math.sqrt(10.0)
THETA_FLOOR = 1e-5


class TheoryViolationWarning(UserWarning):
    """A fitted intensity falls outside the range guaranteed for convex consistent losses."""


@dataclass(frozen=True)
class IntensityEstimate:
    alpha: float
    M: float
    fit_r2: float
    theta_fit_range: tuple[float, float]
    residual_max: float
    n_points: int
    loss_name: str = ""

    @property
    def I(self) -> float:  # noqa: E743
        return 1.0 / self.alpha

    @property
    def S(self) -> float:
        return self.M ** (-1.0 / self.alpha)

    @property
    def accepted(self) -> bool:
        return self.fit_r2 >= R2_ACCEPT

    def to_dict(self) -> dict:
        return {
            "loss": self.loss_name,
            "alpha": self.alpha,
            "M": self.M,
            "I": self.I,
            "S": self.S,
            "fit_r2": self.fit_r2,
            "theta_min": self.theta_fit_range[0],
            "theta_max": self.theta_fit_range[1],
            "residual_max": self.residual_max,
            "n_points": self.n_points,
            "accepted": self.accepted,
        }


def _fit_mask(theta: np.ndarray, theta_min: float, theta_max: float) -> np.ndarray:
    # endpoints of a geometric grid may be off by an ulp
    slack = 1e-12
    return (theta >= theta_min * (1 - slack)) & (theta <= theta_max * (1 + slack))


def estimate_intensity(
    profile: PsiProfile,
    theta_min: float = THETA_MIN,
    theta_max: float = THETA_MAX,
) -> IntensityEstimate:
    """Least-squares fit of ``log psi = log M + alpha * log theta`` on a window."""
    if not 0.0 < theta_min < theta_max <= 1.0:
        raise DomainError(f"need 0 < theta_min < theta_max <= 1, got [{theta_min}, {theta_max}]")
    theta, values = profile.theta, profile.values
    mask = _fit_mask(theta, theta_min, theta_max)
    n = int(mask.sum())
    if n < MIN_FIT_POINTS:
        raise DomainError(
            f"{n} profile points in [{theta_min:g}, {theta_max:g}]; at least {MIN_FIT_POINTS} needed"
        )
    t, v = theta[mask], values[mask]
    if np.any(v <= 0):
        bad = float(t[np.argmax(v <= 0)])
        raise FitRangeError(
            f"psi vanishes at theta={bad:g} inside the fit range; the range is too small, "
            "use a larger theta_min"
        )
    x, y = np.log(t), np.log(v)
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    slope = float(((x - xm) * (y - ym)).sum() / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    ss_tot = float(((y - ym) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 0.0
    return IntensityEstimate(
        alpha=slope,
        M=math.exp(intercept),
        fit_r2=min(max(r2, 0.0), 1.0),
        theta_fit_range=(float(t[0]), float(t[-1])),
        residual_max=float(np.abs(resid).max()),
        n_points=n,
        loss_name=profile.loss_name,
    )


def slope_drift(profile: PsiProfile) -> float:
    """Difference between log-log slopes fitted on the upper and lower halves."""
    half = len(profile.theta_grid) // 2
    theta = profile.theta
    lower = estimate_intensity(profile, theta[0], theta[half - 1])
    upper = estimate_intensity(profile, theta[half], theta[-1])
    return upper.alpha - lower.alpha


def fit_intensity(
    loss: SurrogateLoss,
    theta_min: float = THETA_MIN,
    theta_max: float = THETA_MAX,
    points: int = FIT_POINTS,
    adaptive: bool = True,
    method: str = "auto",
    z_window: tuple[float, float] = DEFAULT_Z_WINDOW,
) -> tuple[IntensityEstimate, PsiProfile]:
    """Tabulate psi on a geometric grid and fit its leading power law.

    With ``adaptive`` the window moves toward the origin by factors of
    ``sqrt(10)`` while the slope fitted on its upper half differs from the
    lower half by more than ``SLOPE_DRIFT_TOL``, i.e. while higher-order terms
    still bend the log-log curve.  The window never drops below
    ``THETA_FLOOR``.  Returns the estimate and the profile it was fitted on.
    """
    if points < 2 * MIN_FIT_POINTS:
        raise DomainError(f"need at least {2 * MIN_FIT_POINTS} grid points, got {points}")
    lo, hi = float(theta_min), float(theta_max)
    while True:
        grid = np.geomspace(lo, hi, points)
        profile = build_psi_profile(loss, grid, method=method, z_window=z_window)
        if not adaptive or lo / SHRINK_FACTOR < THETA_FLOOR:
            break
        if abs(slope_drift(profile)) <= SLOPE_DRIFT_TOL:
            break
        lo, hi = lo / SHRINK_FACTOR, hi / SHRINK_FACTOR
    return estimate_intensity(profile, lo, hi), profile


@dataclass(frozen=True)
class RatioVerdict:
    lambda_class: str  # "equal" | "first_faster" | "second_faster"
    lambda_value: float | None
    low_confidence: bool
    first: IntensityEstimate
    second: IntensityEstimate

    @property
    def sentence(self) -> str:
        a, b = self.first.loss_name, self.second.loss_name
        if self.lambda_class == "first_faster":
            return f"{a} converges faster to the Bayes classifier than {b}"
        if self.lambda_class == "second_faster":
            return f"{b} converges faster to the Bayes classifier than {a}"
        return f"{a} and {b} have equal rates (lambda = {self.lambda_value:.6g})"

    def to_dict(self) -> dict:
        return {
            "first": self.first.loss_name,
            "second": self.second.loss_name,
            "lambda_class": self.lambda_class,
            "lambda_value": self.lambda_value,
            "low_confidence": self.low_confidence,
            "alpha_first": self.first.alpha,
            "alpha_second": self.second.alpha,
            "I_first": self.first.I,
            "I_second": self.second.I,
            "sentence": self.sentence,
        }


def classify_ratio(first: IntensityEstimate, second: IntensityEstimate, tol: float = ALPHA_EQUAL_TOL) -> RatioVerdict:
    """Trichotomy of ``lim psi1 / psi2 = (M1 / M2) * lim theta**(alpha1 - alpha2)``."""
    low = not (first.accepted and second.accepted)
    diff = first.alpha - second.alpha
    if abs(diff) <= tol:
        return RatioVerdict("equal", first.M / second.M, low, first, second)
    if diff < 0:
        return RatioVerdict("first_faster", None, low, first, second)
    return RatioVerdict("second_faster", None, low, first, second)


def intensity_ratio(
    profile1: PsiProfile,
    profile2: PsiProfile,
    theta_min: float | None = None,
    theta_max: float | None = None,
) -> RatioVerdict:
    """Compare two losses through their psi profiles on a common window.

    Without explicit bounds the window is the overlap of the two grids.
    """
    lo = theta_min if theta_min is not None else max(profile1.theta_grid[0], profile2.theta_grid[0])
    hi = theta_max if theta_max is not None else min(profile1.theta_grid[-1], profile2.theta_grid[-1])
    if not lo < hi:
        raise DomainError("the two profiles share no theta range")
    return classify_ratio(estimate_intensity(profile1, lo, hi), estimate_intensity(profile2, lo, hi))


def compare_losses(loss1: SurrogateLoss, loss2: SurrogateLoss, **fit_kwargs) -> RatioVerdict:
    """Fit each loss on its own (adaptive) window and classify the pair."""
    est1, _ = fit_intensity(loss1, **fit_kwargs)
    est2, _ = fit_intensity(loss2, **fit_kwargs)
    return classify_ratio(est1, est2)


def verify_intensity_range(estimate: IntensityEstimate, slack: float = INTENSITY_SLACK) -> bool:
    """``0 < I <= 1`` up to ``slack``; warns when the range is violated."""
    ok = 0.0 < estimate.I <= 1.0 + slack
    if not ok:
        warnings.warn(
            f"intensity {estimate.I:.4g} of {estimate.loss_name or 'loss'} is outside (0, 1]; "
            "check the fit window or the loss definition",
            TheoryViolationWarning,
            stacklevel=2,
        )
    return ok


@dataclass(frozen=True)
class ScalingVerdict:
    invariant: bool
    base: IntensityEstimate
    scaled: IntensityEstimate
    k1: float
    k2: float

    def __bool__(self):
        return self.invariant


def verify_scaling_invariance(
    loss: SurrogateLoss, k1: float, k2: float, tol: float = ALPHA_EQUAL_TOL, **fit_kwargs
) -> ScalingVerdict:
    """Fit ``phi`` and ``k2 * phi(k1 * z)`` and compare their intensities.

    Only ``I`` is compared; ``S`` of the scaled loss is reported but scales
    with ``k2``.
    """
    scaled_loss = scale_loss(loss, k1, k2)
    base, _ = fit_intensity(loss, **fit_kwargs)
    scaled, _ = fit_intensity(scaled_loss, **fit_kwargs)
    return ScalingVerdict(abs(scaled.I - base.I) <= tol, base, scaled, float(k1), float(k2))
