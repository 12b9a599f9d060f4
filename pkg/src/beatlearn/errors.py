"""Exception types shared across the package."""


class BeatlearnError(Exception):
    """Base class for all beatlearn errors."""


class DimensionError(BeatlearnError):
    """Tensor or array shapes are incompatible with the operation."""


class ConfigError(BeatlearnError):
    """A configuration value is out of its valid range."""


class ContractError(BeatlearnError):
    """An operation was called in a way its contract forbids."""


class DataError(BeatlearnError):
    """Input data violates a requirement (missing label, bad patient split, ...)."""


class DegenerateBatchError(DataError):
    """A batch is too small for the requested statistic (e.g. variance of one value)."""


class ParseError(DataError):
    """A file could not be parsed; message carries the offending line number."""


class CheckpointError(BeatlearnError):
    """A checkpoint is missing, malformed, or does not match the model."""
