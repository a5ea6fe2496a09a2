"""Exception types shared across the package."""


class MelvoxError(Exception):
    """Base class for all package errors."""


class ShapeError(MelvoxError):
    """Tensor dimensions incompatible with the requested operation."""


class ContractError(MelvoxError):
    """An operation was called outside its documented preconditions."""


class ConfigError(MelvoxError):
    """Invalid or inconsistent configuration values."""


class DataError(MelvoxError):
    """Input data violates its invariants (non-finite samples, etc.)."""


class StateError(MelvoxError):
    """Operation invalid for the current model/training state."""


class NumericError(MelvoxError):
    """Non-finite value encountered where finiteness is required."""


class ParseError(MelvoxError):
    """Malformed file content; carries a byte offset when known."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedFormatError(MelvoxError):
    """File uses a codec or layout this package does not handle."""


class CorruptionError(MelvoxError):
    """Stored artifact failed its integrity check."""
