"""Exception types raised across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class PsiProfileError(ValueError):
    """A tabulated psi-transform violates one of its structural invariants."""


class FitRangeError(ValueError):
    """The power-law fit window contains no usable (strictly positive) values."""


class TrainingDivergenceError(RuntimeError):
    """Subgradient descent kept increasing the empirical risk.

    ``problem`` is the index of the offending dataset in a batched run.
    """

    def __init__(self, message: str, problem: int | None = None):
        super().__init__(message)
        self.problem = problem


class LossSpecError(ValueError):
    """A loss specification string does not follow the grammar."""
