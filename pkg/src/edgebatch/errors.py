"""Exception types shared across the package."""


class EdgeBatchError(Exception):
    """Base class for package errors."""


class DomainError(EdgeBatchError, ValueError):
    """A value is outside the range an operation accepts."""


class LengthError(EdgeBatchError, ValueError):
    """A series is too short for the requested operation."""


class FitError(EdgeBatchError, ArithmeticError):
    """Model fitting failed (degenerate normal equations)."""


class NotReadyError(EdgeBatchError, RuntimeError):
    """A component was asked for output before it has enough data."""


class ModeError(EdgeBatchError, RuntimeError):
    """An operation is not available in the engine's current mode."""


class ConfigError(EdgeBatchError, ValueError):
    """A configuration value violates an invariant."""


class TraceParseError(EdgeBatchError, ValueError):
    """A trace or table file could not be parsed.

    ``row`` is the 1-based line number of the offending input line when known.
    """

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row
