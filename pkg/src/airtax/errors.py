"""Exception hierarchy shared by every stage of the pipeline.

The CLI maps :class:`ValidationError` to exit code 2 and
:class:`NumericalError` to exit code 3.
"""


class AirtaxError(Exception):
    """Base class for all package errors."""


class ValidationError(AirtaxError, ValueError):
    """Input data or configuration violates a documented invariant."""

    def __init__(self, message, *, path=None, line=None):
        self.path = path
        self.line = line
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class NumericalError(AirtaxError, ArithmeticError):
    """A computation is undefined for the supplied inputs."""


class RankDeficiencyError(NumericalError):
    def __init__(self, column, message=None):
        self.column = column
        super().__init__(message or f"design matrix is rank deficient: column {column!r} is collinear")


class UndefinedPassThroughError(NumericalError):
    """Cournot-Lerner pass-through requires |elasticity| > HHI."""


class OutOfTableRangeError(ValidationError):
    """Fuel-burn lookup outside the tabulated distances (no extrapolation)."""
