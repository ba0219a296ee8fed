"""Exception types shared across the package."""


class HdomsError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(HdomsError):
    """Configuration value is invalid or two values are inconsistent."""


class FormatError(HdomsError):
    """Input file is not in the expected format."""


class EmptySpectrumError(HdomsError):
    """Spectrum has too few usable peaks after filtering."""


class DomainError(HdomsError):
    """Numeric argument falls outside its documented domain."""


class MissingIdError(HdomsError):
    """A bin index has no identity hypervector assigned."""


class DimensionMismatchError(HdomsError):
    """Hypervector dimensions of two operands do not agree."""


class RowLimitExceededError(HdomsError):
    """More crossbar rows driven at once than the sensing scheme allows."""


class ChunkMismatchError(HdomsError):
    """Input vector is not constant within chunks in chunked mode."""


class NoAcceptableThresholdError(HdomsError):
    """No score threshold reaches the requested false discovery rate."""


class StageError(HdomsError):
    """A pipeline stage failed; `stage` names the stage."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
