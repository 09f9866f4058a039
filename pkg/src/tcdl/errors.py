"""Exception hierarchy shared by all tcdl modules.

The CLI maps these onto exit codes: UsageError -> 1, DataError and its
subclasses -> 2, NumericalError and GenerationError -> 3.
"""


class TcdlError(Exception):
    """Base class for all tcdl errors."""


class UsageError(TcdlError, ValueError):
    """Caller asked for something the interface cannot express."""


class DataError(TcdlError, ValueError):
    """Input data violates a documented precondition (non-finite, empty...)."""


class DimensionError(DataError):
    """Shapes or sizes are inconsistent."""


class FormatError(DataError):
    """A container file is malformed; message carries the byte offset."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericalError(TcdlError, RuntimeError):
    """A computation produced NaN or failed to converge in a hard way."""


class GenerationError(NumericalError):
    """Synthetic data constraints could not be satisfied."""
