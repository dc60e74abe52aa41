"""Excess-risk rate statements ``R(f_n) - R* <= O(S / n**e)``.

These are upper-bound orders; constants hidden in ``O(.)`` are not modelled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError
from .intensity import IntensityEstimate


@dataclass(frozen=True)
class DeltaSchedule:
    """``delta(n) = n ** -q`` for the powered hinge."""

    q: float

    def delta(self, n: float) -> float:
        return float(n) ** (-self.q)


@dataclass(frozen=True)
class RateBound:
    p: float
    exponent: float
    constant: float
    schedule: DeltaSchedule | None = None
    loss: str | None = None
    intensity: float | None = None
    conductivity: float | None = None
    low_confidence: bool = False

    def prefactor(self, n: float) -> float:
        """Finite-``n`` bound value without the ``O(.)`` constant.

        Under a schedule this is ``sqrt(2 d / (1 + d) / n**p)`` with
        ``d = delta(n)``; otherwise ``S / n**exponent``.
        """
        if self.schedule is None:
            return self.constant / float(n) ** self.exponent
        d = self.schedule.delta(n)
        return math.sqrt(2.0 * d / (1.0 + d) / float(n) ** self.p)

    def render(self) -> str:
        return f"R(f_n) − R* ≤ {self.order()}"

    def order(self) -> str:
        return f"O({format_constant(self.constant)}/n^{format_exponent(self.exponent)})"

    def to_dict(self) -> dict:
        return {
            "loss": self.loss,
            "p": self.p,
            "I": self.intensity,
            "S": self.conductivity if self.schedule is None else None,
            "constant": self.constant,
            "exponent": self.exponent,
            "schedule": None if self.schedule is None else {"delta_exponent": self.schedule.q},
            "low_confidence": self.low_confidence,
            "bound": self.render(),
        }


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise DomainError(f"{name} must be a positive finite real, got {value!r}")
    return value


def excess_risk_bound(p: float, estimate: IntensityEstimate) -> RateBound:
    """Transfer an ``O(n**-p)`` excess phi-risk to ``O(S / n**(p I))``."""
    p = _positive("p", p)
    return RateBound(
        p=p,
        exponent=p * estimate.I,
        constant=estimate.S,
        loss=estimate.loss_name or None,
        intensity=estimate.I,
        conductivity=estimate.S,
        low_confidence=not estimate.accepted,
    )


def scheduled_bound(p: float, q: float, loss: str | None = "modified_hinge") -> RateBound:
    """Bound for the powered hinge with ``delta(n) = n**-q``.

    ``sqrt(2 delta / (1 + delta) * n**-p) ~ sqrt(2) * n**(-(p + q) / 2)`` for
    large ``n``.
    """
    p = _positive("p", p)
    q = _positive("q", q)
    return RateBound(
        p=p,
        exponent=(p + q) / 2.0,
        constant=math.sqrt(2.0),
        schedule=DeltaSchedule(q),
        loss=loss,
        intensity=0.5,
    )


def format_exponent(e: float) -> str:
    return f"{e:.4g}"


def format_constant(c: float, rel_tol: float = 5e-3) -> str:
    """Short display form: integers and square roots of small integers are named."""
    nearest = round(c)
    if nearest >= 1 and abs(c - nearest) <= rel_tol * c:
        return str(int(nearest))
    sq = round(c * c)
    if 2 <= sq <= 99 and abs(math.sqrt(sq) - c) <= rel_tol * c:
        return f"√{sq}"
    return f"{c:.4g}"
