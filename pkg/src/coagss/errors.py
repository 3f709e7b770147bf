"""Exception hierarchy shared by every module of the package."""


class CoagssError(Exception):
    """Base class for all errors raised by coagss."""


class DomainError(CoagssError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConvergenceError(CoagssError):
    """An iterative or adaptive procedure did not reach its tolerance.

    The best estimate obtained so far is kept in ``estimate``.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class ClosureMissingError(CoagssError):
    """An integral or evaluation beyond the last node needs a tail rate."""


class DegenerateProfileError(CoagssError):
    """The profile has zero (or non-positive) mass."""


class NumericalFailureError(CoagssError):
    """NaN, infinity or negative values appeared during an iteration."""


class PositivityError(CoagssError):
    """A profile value that must be positive is not."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class TailNotExponentialError(CoagssError):
    """No exponential sandwich brackets the tail of the profile."""


class RangeError(CoagssError, ValueError):
    """The grid does not cover the range a diagnostic needs."""
