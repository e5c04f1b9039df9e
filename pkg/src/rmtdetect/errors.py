"""Exception hierarchy.

Two families map onto CLI exit codes: :class:`ConfigError` (exit 2) for
invalid parameters or scenarios, :class:`DataError` (exit 3) for unreadable
or malformed input.
"""


class RmtDetectError(Exception):
    """Base class for all package errors."""


class ConfigError(RmtDetectError, ValueError):
    """Invalid configuration or parameter combination."""


class DimensionError(ConfigError):
    """Matrix or vector dimensions violate an operation's contract."""


class DataError(RmtDetectError):
    """Input data could not be read or is malformed."""


class ParseError(DataError):
    """A row or record has the wrong shape."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OrderingError(ParseError):
    """Sample indices are not strictly increasing with constant stride."""


class CellError(ParseError):
    """A cell is neither numeric nor the missing-value token."""


class NumericalError(RmtDetectError, ArithmeticError):
    """A linear-algebra routine failed to produce a trustworthy result."""
