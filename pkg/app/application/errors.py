from __future__ import annotations

from typing import Optional


class PrudentWalkError(Exception):
    """Base class of every error raised by the package."""


class DomainError(PrudentWalkError, ValueError):
    """An argument lies outside the range an operation accepts."""


class PreconditionError(PrudentWalkError, ValueError):
    """The input is a valid object, but not one the operation is defined on."""


class UnsupportedCaseError(PrudentWalkError):
    """Odd parity for the reflection and folding maps."""


class DivergenceError(PrudentWalkError):
    """A series was evaluated outside its region of convergence."""

    def __init__(self, message: str, lam: Optional[float] = None):
        super().__init__(message)
        self.lam = lam


class SolverError(PrudentWalkError):
    """A bracketed root search failed; carries the bracket diagnostics."""

    def __init__(self, message: str, bracket: tuple[float, float], values: tuple[float, float]):
        super().__init__(f"{message} (bracket={bracket}, values={values})")
        self.bracket = bracket
        self.values = values


class CapacityError(PrudentWalkError):
    """A request exceeds the configured enumeration or table capacity.

    Args:
        message (str): What was requested.
        L (Optional[int]): Offending path length, for enumeration requests.
        R (Optional[int]): Offending strip width, for table requests.
        t (Optional[int]): Offending excursion length, for table requests.
        advice (str): How to raise the limit.
    """

    def __init__(
        self,
        message: str,
        L: Optional[int] = None,
        R: Optional[int] = None,
        t: Optional[int] = None,
        advice: str = "",
    ):
        parts = [message]
        if L is not None:
            parts.append(f"L={L}")
        if R is not None or t is not None:
            parts.append(f"(R, t)=({R}, {t})")
        if advice:
            parts.append(advice)
        super().__init__(" ".join(parts))
        self.L = L
        self.R = R
        self.t = t


class SamplerStallError(PrudentWalkError):
    """The pinned-renewal rejection loop exceeded its restart cap."""


class InconsistentExcursionsError(PrudentWalkError, ValueError):
    """A sequence of excursions does not assemble into a lattice path."""
