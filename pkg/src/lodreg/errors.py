"""Exception hierarchy.

Each class carries the CLI exit code it maps to: 1 for usage problems,
2 for bad input data, 3 for numerical failures.
"""

from __future__ import annotations


class LodError(Exception):
    exit_code = 3


class ConfigurationError(LodError, ValueError):
    exit_code = 1


class DataError(LodError, ValueError):
    exit_code = 2


class SchemaError(DataError):
    """A required column is missing from the input file."""


class DomainError(DataError):
    """A value lies outside the domain of the covariate transformation."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class ConsistencyError(DataError):
    """Detection flags and recorded values disagree."""

    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class NumericError(LodError, ArithmeticError):
    exit_code = 3


class SingularityError(NumericError):
    def __init__(self, message: str, condition_number: float | None = None):
        super().__init__(message)
        self.condition_number = condition_number


class ConvergenceError(NumericError):
    """Iterative solver stopped without meeting its tolerance.

    ``last_iterate`` holds the best point reached, ``trace`` the per-iteration
    diagnostics when the solver keeps them.
    """

    def __init__(self, message: str, last_iterate=None, trace=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.trace = trace


class EstimationError(NumericError):
    """The data carry no information for the requested estimator."""


class DegenerateProcessError(NumericError):
    pass


class ConditionNineWarning(RuntimeWarning):
    """A censored subject's integrated likelihood fell below the floor."""


class BootstrapDegradedWarning(RuntimeWarning):
    pass
