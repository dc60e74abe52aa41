"""Margin-based surrogate losses and the Bayes-risk consistency verdict.

A loss is a function of the margin ``z = y * f(x)``.  The four built-in
families (hinge, exponential, logistic and the powered hinge ``SVM_delta``)
carry analytic conditional-risk optima; anything derived from them through
:func:`scale_loss` is handled numerically downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy.special import entr

from .errors import DomainError, LossSpecError

LN2 = math.log(2.0)

# midpoint-convexity grid
CONVEXITY_WINDOW = (-8.0, 8.0)
CONVEXITY_POINTS = 257
CONVEXITY_TOL = 1e-10

# finite-difference steps for the derivative at the origin
DERIVATIVE_STEPS = (1e-3, 1e-4, 1e-5)
KINK_TOL = 1e-4

# calibration-gap checks never use eta = 1/2, where the gap is zero
DEFAULT_ETA_GRID = tuple(
    sorted({round(0.05 * k, 2) for k in range(11, 20)} | {round(1.0 - 0.05 * k, 2) for k in range(11, 20)})
)
CALIBRATION_GAP_TOL = 1e-9

_NONNEG_PROBE = np.linspace(-64.0, 64.0, 1025)

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ClosedForms:
    """Analytic conditional-risk results, all vectorized over their argument."""

    c_star: ArrayFn
    z_star: ArrayFn
    psi: ArrayFn


@dataclass(frozen=True, eq=False)
class SurrogateLoss:
    """A nonnegative margin loss ``phi(z)``.

    ``func`` and ``grad`` operate on float arrays.  ``grad`` may be omitted,
    in which case a central difference is used wherever a (sub)gradient is
    needed.  Nonnegativity is probed on ``[-64, 64]`` at construction.
    """

    name: str
    func: ArrayFn
    grad: ArrayFn | None = None
    params: Mapping[str, float] = field(default_factory=dict)
    closed_forms: ClosedForms | None = None
    # (base, k1, k2) when built by scale_loss
    scaled_from: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        with np.errstate(over="ignore", invalid="ignore"):
            values = np.asarray(self.func(_NONNEG_PROBE), dtype=float)
        if np.any(values < 0):
            z = _NONNEG_PROBE[int(np.argmax(values < 0))]
            raise DomainError(f"loss {self.name!r} is negative at z={z:g}")

    def __call__(self, z):
        return self.func(np.asarray(z, dtype=float))

    def derivative(self, z):
        z = np.asarray(z, dtype=float)
        if self.grad is not None:
            return self.grad(z)
        h = 1e-6
        return (self.func(z + h) - self.func(z - h)) / (2 * h)

    @property
    def label(self) -> str:
        """The specification string this loss parses back from."""
        return self.name

    def __repr__(self):
        return f"SurrogateLoss({self.name!r})"


def _fmt(x: float) -> str:
    text = repr(float(x))
    return text[:-2] if text.endswith(".0") else text


# ---------------------------------------------------------------------------
# built-in families
# ---------------------------------------------------------------------------


def _binary_entropy_bits(eta):
    eta = np.asarray(eta, dtype=float)
    return (entr(eta) + entr(1.0 - eta)) / LN2


def _safe_logit(eta):
    eta = np.asarray(eta, dtype=float)
    with np.errstate(divide="ignore"):
        return np.log(eta) - np.log1p(-eta)


def _logistic_value(z):
    # stable log(1 + exp(-z)); several times faster than np.logaddexp
    return (np.maximum(-z, 0.0) + np.log1p(np.exp(-np.abs(z)))) / LN2


def _logistic_grad(z):
    return -1.0 / (1.0 + np.exp(np.minimum(z, 700.0))) / LN2


def hinge() -> SurrogateLoss:
    """``max(0, 1 - z)``."""
    return SurrogateLoss(
        name="hinge",
        func=lambda z: np.maximum(0.0, 1.0 - z),
        grad=lambda z: (z < 1.0) * -1.0,
        closed_forms=ClosedForms(
            c_star=lambda eta: 1.0 - np.abs(2.0 * np.asarray(eta, dtype=float) - 1.0),
            z_star=lambda eta: np.sign(np.asarray(eta, dtype=float) - 0.5),
            psi=lambda theta: np.abs(np.asarray(theta, dtype=float)),
        ),
    )


def exponential() -> SurrogateLoss:
    """``exp(-z)``, the AdaBoost loss."""
    return SurrogateLoss(
        name="exponential",
        func=lambda z: np.exp(-z),
        grad=lambda z: -np.exp(-z),
        closed_forms=ClosedForms(
            c_star=lambda eta: 2.0 * np.sqrt(np.asarray(eta, dtype=float) * (1.0 - np.asarray(eta, dtype=float))),
            z_star=lambda eta: 0.5 * _safe_logit(eta),
            psi=lambda theta: 1.0 - np.sqrt(1.0 - np.asarray(theta, dtype=float) ** 2),
        ),
    )


def logistic() -> SurrogateLoss:
    """``log2(1 + exp(-z))``; base 2 so that ``phi(0) = 1``."""
    return SurrogateLoss(
        name="logistic",
        func=_logistic_value,
        grad=_logistic_grad,
        closed_forms=ClosedForms(
            c_star=_binary_entropy_bits,
            z_star=_safe_logit,
            psi=lambda theta: 1.0 - _binary_entropy_bits((1.0 + np.asarray(theta, dtype=float)) / 2.0),
        ),
    )


def make_modified_hinge(delta: float) -> SurrogateLoss:
    """The powered hinge ``max(1 - z, 0) ** (1 + delta)`` used by SVM_delta.

    ``delta`` must be strictly positive; ``delta = 0`` is the plain hinge and
    has its own constructor.
    """
    delta = float(delta)
    if not (math.isfinite(delta) and delta > 0):
        raise DomainError(f"modified hinge needs 0 < delta < inf, got {delta!r}")
    power = 1.0 + delta
    inv = 1.0 / delta

    def c_star(eta):
        eta = np.asarray(eta, dtype=float)
        s = eta**inv + (1.0 - eta) ** inv
        return 2.0**power * eta * (1.0 - eta) / s**delta

    def z_star(eta):
        eta = np.asarray(eta, dtype=float)
        a, b = eta**inv, (1.0 - eta) ** inv
        return (a - b) / (a + b)

    def psi(theta):
        theta = np.asarray(theta, dtype=float)
        s = (1.0 + theta) ** inv + (1.0 - theta) ** inv
        return 1.0 - 2.0**delta * (1.0 - theta**2) / s**delta

    return SurrogateLoss(
        name=f"modified_hinge:delta={_fmt(delta)}",
        func=lambda z: np.maximum(1.0 - z, 0.0) ** power,
        grad=lambda z: -power * np.maximum(1.0 - z, 0.0) ** delta,
        params={"delta": delta},
        closed_forms=ClosedForms(c_star=c_star, z_star=z_star, psi=psi),
    )


def scale_loss(loss: SurrogateLoss, k1: float, k2: float) -> SurrogateLoss:
    """Return ``z -> k2 * phi(k1 * z)``; analytic metadata is dropped."""
    k1, k2 = float(k1), float(k2)
    for key, val in (("k1", k1), ("k2", k2)):
        if not (math.isfinite(val) and val > 0):
            raise DomainError(f"{key} must be a positive finite real, got {val!r}")
    base = loss
    # collapse nested scalings so composition stays exact
    if loss.scaled_from is not None:
        base, b1, b2 = loss.scaled_from
        k1, k2 = k1 * b1, k2 * b2
    func = base.func
    grad = base.grad
    return SurrogateLoss(
        name=f"scaled:{base.name}:k1={_fmt(k1)}:k2={_fmt(k2)}",
        func=lambda z: k2 * func(k1 * z),
        grad=None if grad is None else (lambda z: k2 * k1 * grad(k1 * z)),
        params={**dict(base.params), "k1": k1, "k2": k2},
        scaled_from=(base, k1, k2),
    )


BUILTIN_LOSSES: dict[str, Callable[[], SurrogateLoss]] = {
    "hinge": hinge,
    "exponential": exponential,
    "logistic": logistic,
}

LOSS_GRAMMAR = (
    '"hinge", "exponential", "logistic", "modified_hinge:delta=<float>", '
    '"scaled:<base>:k1=<float>:k2=<float>"'
)


def _keyvalue(token: str, key: str, spec: str) -> float:
    name, sep, value = token.partition("=")
    if not sep or name.strip() != key:
        raise LossSpecError(f"expected '{key}=<float>' in {spec!r}; grammar: {LOSS_GRAMMAR}")
    try:
        return float(value)
    except ValueError:
        raise LossSpecError(f"bad number {value!r} in {spec!r}") from None


def parse_loss_spec(spec: str) -> SurrogateLoss:
    """Build a loss from its specification string (see ``LOSS_GRAMMAR``)."""
    spec = spec.strip()
    if spec in BUILTIN_LOSSES:
        return BUILTIN_LOSSES[spec]()
    parts = spec.split(":")
    try:
        if parts[0] == "modified_hinge" and len(parts) == 2:
            return make_modified_hinge(_keyvalue(parts[1], "delta", spec))
        if parts[0] == "scaled" and len(parts) >= 4:
            base = parse_loss_spec(":".join(parts[1:-2]))
            k1 = _keyvalue(parts[-2], "k1", spec)
            k2 = _keyvalue(parts[-1], "k2", spec)
            return scale_loss(base, k1, k2)
    except DomainError as exc:
        raise LossSpecError(f"{spec!r}: {exc}") from None
    raise LossSpecError(f"unknown loss {spec!r}; grammar: {LOSS_GRAMMAR}")


# ---------------------------------------------------------------------------
# pointwise evaluation and derivative
# ---------------------------------------------------------------------------


def eval_loss(loss: SurrogateLoss, z: float) -> float:
    z = float(z)
    if not math.isfinite(z):
        raise DomainError(f"margin must be finite, got {z!r}")
    value = float(loss(np.array([z]))[0])
    if value < 0:
        raise DomainError(f"loss {loss.name!r} returned {value!r} < 0 at z={z!r}")
    return value


class KinkAtZero(NamedTuple):
    """One-sided derivatives at the origin that do not agree."""

    left: float
    right: float


def _richardson(values: Sequence[float], ratio: float, order: int) -> float:
    # Neville tableau; the leading error term scales like h**order, then h**(2*order) ...
    table = list(values)
    power = order
    while len(table) > 1:
        factor = ratio**power
        table = [(factor * table[i + 1] - table[i]) / (factor - 1.0) for i in range(len(table) - 1)]
        power += order
    return table[0]


def _one_sided_order(loss: SurrogateLoss, steps: Sequence[float], sign: float) -> float:
    f0 = eval_loss(loss, 0.0)
    quotients = [sign * (eval_loss(loss, sign * h) - f0) / h for h in steps]
    return _richardson(quotients, steps[0] / steps[1], 1)


def derivative_at_zero(
    loss: SurrogateLoss,
    steps: Sequence[float] = DERIVATIVE_STEPS,
    kink_tol: float = KINK_TOL,
) -> float | KinkAtZero:
    """Estimate ``phi'(0)``, or report a :class:`KinkAtZero`.

    Central differences over ``steps`` are Richardson-extrapolated.  The
    forward and backward one-sided quotients are extrapolated the same way;
    if they disagree by more than ``kink_tol`` (relative to ``max(1, |d|)``)
    the loss is not differentiable at the origin.
    """
    steps = tuple(float(h) for h in steps)
    if len(steps) < 2:
        raise DomainError("need at least two finite-difference steps")
    central = [(eval_loss(loss, h) - eval_loss(loss, -h)) / (2.0 * h) for h in steps]
    d = _richardson(central, steps[0] / steps[1], 2)
    right = _one_sided_order(loss, steps, +1.0)
    left = _one_sided_order(loss, steps, -1.0)
    if abs(right - left) > kink_tol * max(1.0, abs(d)):
        return KinkAtZero(left=left, right=right)
    return d


# ---------------------------------------------------------------------------
# convexity and consistency
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvexityVerdict:
    passed: bool
    violation: tuple[float, float] | None = None

    def __bool__(self):
        return self.passed


def check_convexity(
    loss: Callable,
    z_lo: float = CONVEXITY_WINDOW[0],
    z_hi: float = CONVEXITY_WINDOW[1],
    grid_size: int = CONVEXITY_POINTS,
    tol: float = CONVEXITY_TOL,
) -> ConvexityVerdict:
    """Midpoint-convexity test over every pair of a uniform grid.

    ``loss`` may be any vectorized callable, so concave counter-examples can
    be tested without passing the nonnegativity gate of :class:`SurrogateLoss`.
    On failure the first violating pair ``(a, b)`` in row-major order is
    reported.
    """
    if not z_lo < z_hi:
        raise DomainError(f"need z_lo < z_hi, got [{z_lo}, {z_hi}]")
    if grid_size < 3:
        raise DomainError(f"grid_size must be >= 3, got {grid_size}")
    z = np.linspace(z_lo, z_hi, grid_size)
    f = np.asarray(loss(z), dtype=float)
    i, j = np.triu_indices(grid_size, k=1)
    mid = np.asarray(loss(0.5 * (z[i] + z[j])), dtype=float)
    chord = 0.5 * (f[i] + f[j])
    bad = mid > chord + tol * np.maximum(1.0, np.abs(chord))
    if np.any(bad):
        k = int(np.argmax(bad))
        return ConvexityVerdict(False, (float(z[i[k]]), float(z[j[k]])))
    return ConvexityVerdict(True)


@dataclass(frozen=True)
class ConsistencyReport:
    convex: bool
    derivative_at_zero: float | KinkAtZero
    theorem1_consistent: bool | None
    lemma2_consistent: bool
    eta_grid: tuple[float, ...]
    calibration_gaps: tuple[float, ...] = ()
    convexity_violation: tuple[float, float] | None = None

    @property
    def consistent(self) -> bool:
        """Both verdicts hold (an undetermined derivative test counts as no)."""
        return bool(self.theorem1_consistent) and self.lemma2_consistent

    def to_dict(self) -> dict:
        d0 = self.derivative_at_zero
        return {
            "convex": self.convex,
            "derivative_at_zero": None if isinstance(d0, KinkAtZero) else float(d0),
            "kink_at_zero": list(d0) if isinstance(d0, KinkAtZero) else None,
            "theorem1_consistent": self.theorem1_consistent,
            "lemma2_consistent": self.lemma2_consistent,
            "consistent": self.consistent,
            "eta_grid": list(self.eta_grid),
            "min_calibration_gap": min(self.calibration_gaps) if self.calibration_gaps else None,
        }


def check_bayes_consistency(
    loss: SurrogateLoss,
    eta_grid: Sequence[float] = DEFAULT_ETA_GRID,
    z_window: tuple[float, float] | None = None,
) -> ConsistencyReport:
    """Classify ``loss`` by the derivative criterion and by calibration gaps.

    The derivative criterion requires convexity, differentiability at 0 and
    ``phi'(0) < 0``; it is ``None`` (undetermined) at a kink.  The
    calibration check requires ``C*^-(eta) - C*(eta) > 0`` at every grid
    point, which never includes ``eta = 1/2``.
    """
    from .psi import DEFAULT_Z_WINDOW, optimal_conditional_risk

    eta_grid = tuple(float(e) for e in eta_grid)
    if any(e == 0.5 for e in eta_grid):
        raise DomainError("the calibration grid must exclude eta = 1/2")
    convexity = check_convexity(loss)
    d0 = derivative_at_zero(loss)
    if isinstance(d0, KinkAtZero):
        theorem1 = None
    else:
        theorem1 = bool(convexity) and d0 < 0
    window = z_window or DEFAULT_Z_WINDOW
    gaps = []
    for eta in eta_grid:
        point = optimal_conditional_risk(loss, eta, z_window=window, convexity_verified=bool(convexity))
        gaps.append(point.c_star_minus - point.c_star)
    lemma2 = all(g > CALIBRATION_GAP_TOL for g in gaps)
    return ConsistencyReport(
        convex=bool(convexity),
        derivative_at_zero=d0,
        theorem1_consistent=theorem1,
        lemma2_consistent=lemma2,
        eta_grid=eta_grid,
        calibration_gaps=tuple(gaps),
        convexity_violation=convexity.violation,
    )
