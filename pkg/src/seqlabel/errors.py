"""Exception types shared across the package."""


class SeqLabelError(Exception):
    """Base class for every error this package raises on purpose."""


class ShapeError(SeqLabelError):
    """An array or sequence does not have the dimensions an operation requires."""


class ContractError(SeqLabelError):
    """A precondition of an operation does not hold (bad argument, bad state)."""


class NumericError(SeqLabelError):
    """A quantity that must be finite came out NaN or infinite."""


class ParseError(SeqLabelError):
    """Malformed textual input. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EnumerationCapError(ContractError):
    """Exact enumeration was requested for more labels than the configured cap."""
