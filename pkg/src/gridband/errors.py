"""Exception and warning types shared across the package.

The CLI maps these onto process exit codes: config problems exit 2, data
problems exit 3, violated internal invariants exit 4.
"""


class GridbandError(Exception):
    """Base class for all package errors."""


class ConfigError(GridbandError):
    """Invalid configuration value or inconsistent run setup."""


class DataError(GridbandError):
    """Problem with input data (files, schemas, alignment)."""


class SchemaError(DataError):
    """A required column is missing or a column role is ill-defined."""


class GridError(DataError):
    """Timestamps are duplicated or not on the declared uniform grid."""


class RowParseError(DataError):
    """A data row failed to parse; message carries the 1-based line number."""


class InsufficientHistoryError(DataError):
    """Series too short for the requested lags / windows."""


class AlignmentError(DataError):
    """Two artifacts that must share a time region do not."""


class ShapeError(GridbandError):
    """Array shape mismatch; signals a wiring bug, not bad input data."""


class FeasibilityError(GridbandError):
    """A trade plan violated battery limits; plans are validated upstream,
    so hitting this means a logic bug."""


class GridbandWarning(UserWarning):
    """Non-fatal condition worth surfacing (degenerate calibration sizes,
    collinear pools, fallback code paths)."""
