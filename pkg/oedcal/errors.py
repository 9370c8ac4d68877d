"""Exception hierarchy shared by every ``oedcal`` module."""

from __future__ import annotations

from typing import TYPE_CHECKING, Optional

if TYPE_CHECKING:
    from .solvers import DesignReport


class OedCalError(Exception):
    """Base class for all errors raised by oedcal."""


class TargetOutOfRange(OedCalError):
    """A root-finding target is not bracketed by the function on its domain."""


class NonFinite(OedCalError):
    """A function evaluation returned NaN or an infinity."""


class NotPSD(OedCalError):
    """A matrix expected to be positive semidefinite has a negative eigenvalue."""


class DomainError(OedCalError, ValueError):
    """A point or parameter lies outside the admissible domain of a model."""


class SingularWeight(OedCalError):
    """The heteroscedastic weight dmu/dy vanishes where the regressor is needed."""


class ScaleMismatch(OedCalError, ValueError):
    """A design on the dose scale was given where a response design is needed (or vice versa)."""


class InvalidDesign(OedCalError, ValueError):
    """Support points or weights violate the design invariants."""


class EmptyDesign(OedCalError):
    """Every support point was dropped while merging a design."""


class SingularDesign(OedCalError):
    """The design cannot estimate what the criterion needs."""


class NotEstimable(OedCalError):
    """A linear combination of the parameters lies outside the range of the FIM."""


class Unsupported(OedCalError):
    """The requested operation is not defined for this criterion."""


class DegenerateSystem(OedCalError):
    """The Elfving weight system is singular for the requested support."""


class SingularSequence(OedCalError):
    """A space-filling sequence is singular for every admissible ratio."""


class ConfigError(OedCalError):
    """A scenario configuration value is missing or invalid."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class SolverError(OedCalError):
    """A solver finished without a valid certificate; the report is still attached."""

    def __init__(self, message: str, report: Optional["DesignReport"] = None):
        super().__init__(message)
        self.report = report


class CertificationFailed(SolverError):
    """The equivalence-theorem check rejected a candidate optimum."""


class MaxIterations(SolverError):
    """An iterative solver ran out of iterations before its stopping rule fired."""
