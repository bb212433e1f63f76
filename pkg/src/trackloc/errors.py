"""Exception hierarchy shared by all trackloc modules."""

from __future__ import annotations


class TracklocError(Exception):
    """Base class for every error raised by this package."""


class DomainError(TracklocError, ValueError):
    """Input outside the mathematical domain of an operation."""


class DegenerateFitError(DomainError):
    """A fit was requested on data that does not determine the model."""


class ParseError(TracklocError, ValueError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class ConfigError(TracklocError):
    """Invalid or incomplete configuration (CLI exit code 2)."""


class DataError(TracklocError):
    """Malformed or inconsistent data files (CLI exit code 3)."""


class NumericalError(TracklocError):
    """A numerical procedure failed to produce a usable result (CLI exit code 4)."""
