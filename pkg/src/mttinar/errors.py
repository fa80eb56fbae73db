"""Exception hierarchy shared by every module.

Each exception carries an ``exit_code`` so the command line can map failures
onto its documented status codes without inspecting messages.
"""


class MTTINARError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class InputError(MTTINARError, ValueError):
    exit_code = 2


class DomainError(InputError):
    """A parameter lies outside its admissible domain."""


class ParseError(InputError):
    """A data file could not be read as a count series."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class InsufficientRegimeDataError(InputError):
    """One regime has too few transitions for the requested estimator."""


class NumericalError(MTTINARError):
    exit_code = 3


class SingularDesignError(NumericalError):
    pass


class SingularInformationError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    """The optimizer hit its iteration cap; ``best`` holds the best iterate."""

    def __init__(self, message, best=None, loglik=None):
        super().__init__(message)
        self.best = best
        self.loglik = loglik


class TruncationError(MTTINARError):
    """The truncated state space loses more probability mass than allowed."""

    exit_code = 4

    def __init__(self, message, suggested_max_state=None):
        super().__init__(message)
        self.suggested_max_state = suggested_max_state
