"""Exception types shared across the toolkit."""


class DecegyError(Exception):
    """Base class for all decegy errors."""


class TraceParseError(DecegyError):
    """A decode-trace file is syntactically invalid.

    Carries the 1-based line number where parsing failed, when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class IllegalEventError(DecegyError):
    """A decode event is not legal for the trace's codec."""


class DataValidationError(DecegyError):
    """A dataset, record or file violates the schema or its invariants."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


class FitError(DecegyError):
    """A model fit cannot be performed (under-determined or numerically failed)."""
