"""Exception types shared across the package."""


class NarxAqiError(Exception):
    """Base class for all package errors."""


class FormatError(NarxAqiError):
    """Input file is malformed (e.g. missing CSV header)."""


class SchemaError(NarxAqiError):
    """CSV columns do not match the configured schema."""


class ConfigurationError(NarxAqiError):
    """Invalid or inconsistent configuration."""


class InsufficientDataError(NarxAqiError):
    """Too few usable rows for the requested operation."""


class TrainingError(NarxAqiError):
    """Training produced a non-finite error or otherwise failed."""

    def __init__(self, message, epoch=None, trace=None):
        super().__init__(message)
        self.epoch = epoch
        self.trace = trace
