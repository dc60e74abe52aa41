"""Conditional phi-risk, its optima and the psi-transform.

``psi(theta) = phi(0) - C*((1 + theta) / 2)`` where
``C*(eta) = inf_z eta * phi(z) + (1 - eta) * phi(-z)``.
Closed forms are used when a loss registers them; otherwise the infimum is
taken numerically over a finite margin window.
"""

from __future__ import annotations

import csv
import functools
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, PsiProfileError
from .losses import SurrogateLoss
from .search import bracketed_minimize

DEFAULT_Z_WINDOW = (-16.0, 16.0)
SCAN_POINTS = 65
Z_TOL = 1e-10
NEGATIVE_CLAMP = 1e-12
PSI_ZERO_TOL = 1e-9
MONOTONE_TOL = 1e-12

CLOSED_FORM = "closed_form"
NUMERIC = "numeric"


def _check_eta(eta: float) -> float:
    eta = float(eta)
    if not 0.0 <= eta <= 1.0:
        raise DomainError(f"eta must lie in [0, 1], got {eta!r}")
    return eta


def conditional_risk(loss: SurrogateLoss, eta: float, z):
    """``eta * phi(z) + (1 - eta) * phi(-z)``; ``z`` may be an array."""
    eta = _check_eta(eta)
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise DomainError("margin must be finite")
    value = eta * loss(z) + (1.0 - eta) * loss(-z)
    return float(value) if value.ndim == 0 else value


@dataclass(frozen=True)
class ConditionalRiskPoint:
    eta: float
    z_star: float
    c_star: float
    c_star_minus: float
    convexity_verified: bool = False

    @property
    def calibration_gap(self) -> float:
        return self.c_star_minus - self.c_star


def optimal_conditional_risk(
    loss: SurrogateLoss,
    eta: float,
    z_window: tuple[float, float] = DEFAULT_Z_WINDOW,
    tol: float = Z_TOL,
    convexity_verified: bool = False,
) -> ConditionalRiskPoint:
    """Numerically minimize ``C(eta, .)`` over ``z_window``.

    ``c_star_minus`` is the minimum over the half of the window where
    ``z * (eta - 1/2) <= 0``.  The search assumes convexity; a non-convex loss
    may yield a local minimum, which ``convexity_verified=False`` signals.
    """
    eta = _check_eta(eta)
    lo, hi = map(float, z_window)
    if not lo < 0.0 < hi:
        raise DomainError(f"z_window must straddle 0, got {z_window}")

    def f(z):
        return eta * loss(z) + (1.0 - eta) * loss(-z)

    z_star, c_star = bracketed_minimize(f, lo, hi, SCAN_POINTS, tol)
    if eta == 0.5:
        z_minus, c_minus = z_star, c_star
    else:
        half = (lo, 0.0) if eta > 0.5 else (0.0, hi)
        z_minus, c_minus = bracketed_minimize(f, *half, SCAN_POINTS, tol)
    if c_minus < c_star:
        # the infimum over a sub-window can never beat the full window
        z_star, c_star = z_minus, c_minus
    return ConditionalRiskPoint(eta, z_star, c_star, c_minus, convexity_verified)


def _check_theta(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if np.any(~np.isfinite(theta)) or np.any(theta < 0.0) or np.any(theta > 1.0):
        raise DomainError("theta must lie in [0, 1]")
    return theta


def _clamp(values: np.ndarray, theta: np.ndarray) -> np.ndarray:
    bad = values < -NEGATIVE_CLAMP
    if np.any(bad):
        k = int(np.argmax(bad))
        raise PsiProfileError(
            f"psi({theta.flat[k]:g}) = {values.flat[k]:.3e} is negative beyond round-off; "
            "the conditional-risk optimizer failed"
        )
    return np.where(values < 0.0, 0.0, values)


def psi(loss: SurrogateLoss, theta, method: str = "auto", z_window=DEFAULT_Z_WINDOW):
    """Evaluate the psi-transform at ``theta`` (scalar or array).

    ``method`` is ``"auto"`` (closed form when registered), ``"closed_form"``
    or ``"numeric"``.
    """
    theta_arr = _check_theta(theta)
    source = resolve_source(loss, method)
    if source == CLOSED_FORM:
        values = np.asarray(loss.closed_forms.psi(theta_arr), dtype=float)
    else:
        phi0 = float(loss(0.0))
        flat = [
            phi0 - optimal_conditional_risk(loss, (1.0 + t) / 2.0, z_window=z_window).c_star
            for t in theta_arr.ravel()
        ]
        values = np.asarray(flat, dtype=float).reshape(theta_arr.shape)
    values = _clamp(values, theta_arr)
    return float(values) if values.ndim == 0 else values


def resolve_source(loss: SurrogateLoss, method: str) -> str:
    if method == "auto":
        return CLOSED_FORM if loss.closed_forms is not None else NUMERIC
    if method == CLOSED_FORM:
        if loss.closed_forms is None:
            raise DomainError(f"loss {loss.name!r} has no registered closed form")
        return CLOSED_FORM
    if method == NUMERIC:
        return NUMERIC
    raise DomainError(f"unknown psi method {method!r}")


@dataclass(frozen=True)
class PsiProfile:
    """A psi-transform tabulated on an increasing theta grid.

    Invariants are checked on construction: ``psi(0) = 0`` when 0 is on the
    grid, values nonnegative and nondecreasing.
    """

    loss_name: str
    theta_grid: tuple[float, ...]
    psi_values: tuple[float, ...]
    source: str
    z_window: tuple[float, float] | None = None
    loss_params: dict = field(default_factory=dict)

    def __post_init__(self):
        theta = np.asarray(self.theta_grid, dtype=float)
        values = np.asarray(self.psi_values, dtype=float)
        if theta.shape != values.shape or theta.ndim != 1:
            raise PsiProfileError("theta_grid and psi_values must be aligned 1-D sequences")
        if self.source not in (CLOSED_FORM, NUMERIC):
            raise PsiProfileError(f"unknown source {self.source!r}")
        for t, v in zip(theta, values):
            if t == 0.0 and abs(v) > PSI_ZERO_TOL:
                raise PsiProfileError(f"psi(0) = {v:.3e}, expected 0")
            if v < -NEGATIVE_CLAMP:
                raise PsiProfileError(f"psi({t:g}) = {v:.3e} is negative")
        drops = np.flatnonzero(np.diff(values) < -MONOTONE_TOL)
        if drops.size:
            k = int(drops[0]) + 1
            raise PsiProfileError(
                f"psi decreases at theta={theta[k]:g}: {values[k - 1]:.12g} -> {values[k]:.12g}"
            )

    @property
    def theta(self) -> np.ndarray:
        return np.asarray(self.theta_grid, dtype=float)

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.psi_values, dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["theta", "psi", "source"])
        for t, v in zip(self.theta_grid, self.psi_values):
            writer.writerow([repr(float(t)), repr(float(v)), self.source])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "loss": self.loss_name,
            "loss_params": {k: float(v) for k, v in self.loss_params.items()},
            "source": self.source,
            "z_window": None if self.z_window is None else [float(x) for x in self.z_window],
            "theta": [float(t) for t in self.theta_grid],
            "psi": [float(v) for v in self.psi_values],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "PsiProfile":
        window = data.get("z_window")
        return cls(
            loss_name=data["loss"],
            theta_grid=tuple(data["theta"]),
            psi_values=tuple(data["psi"]),
            source=data["source"],
            z_window=None if window is None else tuple(window),
            loss_params=dict(data.get("loss_params", {})),
        )


def build_psi_profile(
    loss: SurrogateLoss,
    theta_grid: Sequence[float],
    method: str = "auto",
    z_window: tuple[float, float] = DEFAULT_Z_WINDOW,
) -> PsiProfile:
    """Tabulate ``psi`` on ``theta_grid``; raises PsiProfileError on a bad profile."""
    theta = _check_theta(theta_grid)
    if theta.ndim != 1 or theta.size == 0:
        raise DomainError("theta_grid must be a non-empty 1-D sequence")
    if np.any(np.diff(theta) <= 0):
        raise DomainError("theta_grid must be strictly increasing")
    source = resolve_source(loss, method)
    values = np.atleast_1d(psi(loss, theta, method=source, z_window=z_window))
    return PsiProfile(
        loss_name=loss.name,
        theta_grid=tuple(float(t) for t in theta),
        psi_values=tuple(float(v) for v in values),
        source=source,
        z_window=tuple(float(x) for x in z_window) if source == NUMERIC else None,
        loss_params=dict(loss.params),
    )


def midpoint_convex(profile: PsiProfile, tol: float = 1e-9) -> bool:
    """Discrete convexity of a profile tabulated on a uniform grid."""
    theta, values = profile.theta, profile.values
    if theta.size < 3:
        return True
    if not np.allclose(np.diff(theta), theta[1] - theta[0], rtol=1e-9, atol=1e-12):
        raise DomainError("midpoint convexity needs a uniform theta grid")
    second = values[:-2] - 2.0 * values[1:-1] + values[2:]
    return bool(np.all(second >= -tol))


@functools.lru_cache(maxsize=64)
def c_star_function(loss: SurrogateLoss, nodes: int = 1025) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized ``C*(eta)`` on ``[0, 1]``.

    The closed form is returned when registered.  Otherwise ``C*`` is tabulated
    numerically on ``[0, 1/2]`` (it is symmetric about 1/2) and interpolated
    with a shape-preserving cubic.  Nodes crowd toward ``eta = 0``, where
    exponential-type losses have a square-root singularity.
    """
    if loss.closed_forms is not None:
        return loss.closed_forms.c_star
    half = 0.5 * (1.0 - np.cos(np.linspace(0.0, 0.5 * np.pi, nodes)))
    half[-1] = 0.5
    table = np.array([optimal_conditional_risk(loss, e).c_star for e in half])
    interp = PchipInterpolator(half, table)

    def c_star(eta):
        eta = np.asarray(eta, dtype=float)
        return interp(np.minimum(eta, 1.0 - eta))

    return c_star

