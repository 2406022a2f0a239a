"""Exception hierarchy shared across the package."""


class ProtoICLError(Exception):
    """Base class for all package errors."""


class DimensionError(ProtoICLError, ValueError):
    """Array shapes do not match what an operation requires."""


class UsageError(ProtoICLError, RuntimeError):
    """An API was called in the wrong state or order."""


class ConfigError(ProtoICLError, ValueError):
    """Invalid or inconsistent configuration."""


class DataError(ProtoICLError, ValueError):
    """Malformed, truncated, or inconsistent dataset."""


class NonFiniteError(ProtoICLError, FloatingPointError):
    """A loss or gradient became NaN/Inf."""


class CheckpointError(ProtoICLError, ValueError):
    """Checkpoint cannot be read (version mismatch, truncation, corruption)."""
