"""Error types shared across the package."""


class BldcError(Exception):
    """Base class for all package errors."""


class DimensionError(BldcError, ValueError):
    """Grid dimensions are invalid (must be odd and >= 5)."""


class GenerationError(BldcError, RuntimeError):
    """Feasibility resampling exceeded its attempt cap."""


class ConfigError(BldcError, ValueError):
    """Malformed specification or configuration value."""


class UsageError(BldcError, RuntimeError):
    """An operation was called in a state that forbids it."""


class PlanningError(BldcError, RuntimeError):
    """A planner was asked to reach an unreachable objective."""


class ExplorationExhausted(BldcError, RuntimeError):
    """Frontier exploration ran out of frontiers before finding the goal."""


class CapacityError(BldcError, RuntimeError):
    """An enumeration or resource cap was exceeded."""


class FormatError(BldcError, ValueError):
    """A persisted artifact could not be decoded."""


class VersionMismatchError(FormatError):
    """Persisted artifact has an unsupported format version."""


class ChecksumError(FormatError):
    """Persisted record failed its integrity check."""

    def __init__(self, record_index: int, message: str = ""):
        self.record_index = record_index
        super().__init__(message or f"checksum mismatch in record {record_index}")


class TruncationError(FormatError):
    """Persisted artifact ended before a complete record."""
