"""Exception hierarchy shared by the library and the CLI.

Every class carries the process exit code the CLI reports for it.
"""


class DcharFieldError(Exception):
    """Base class for all errors raised by the package."""

    exit_code: int = 1


class ValidationError(DcharFieldError, ValueError):
    """Invalid input or configuration (exit code 1)."""

    exit_code = 1


class DomainError(ValidationError):
    """An argument lies outside the domain of a mathematical function."""


class PreconditionFailed(ValidationError):
    """A documented precondition does not hold (e.g. a divergent spectral measure)."""


class UnsupportedMeasure(ValidationError):
    """The spectral measure cannot be used for the requested operation."""


class SupportOverflow(ValidationError):
    """The kernel support leaves the simulated spatial domain."""


class GridTooCoarse(ValidationError):
    """The grid does not resolve the requested test functions."""


class TabulationTooCoarse(ValidationError):
    """Tabulated spectral data cannot bound the tail of the measure."""


class QuadratureNoConvergence(DcharFieldError, ArithmeticError):
    """Adaptive quadrature did not reach its tolerance within the evaluation budget."""

    exit_code = 2


class AcceptanceFailure(DcharFieldError):
    """A verification command finished but its acceptance threshold was not met."""

    exit_code = 3
