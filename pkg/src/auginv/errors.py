"""Exception types shared across the package."""


class AuginvError(Exception):
    """Base class for all package errors."""


class InvalidInputError(AuginvError):
    """Malformed numerical input (shape mismatch, NaN/Inf, bad labels)."""


class InvalidConfigError(AuginvError):
    """Inconsistent configuration (unsupported order, bad loss setup)."""


class SizeLimitError(AuginvError):
    """Input exceeds a hard size limit of an exhaustive algorithm."""


class DegenerateSampleError(AuginvError):
    """Too few samples, or a sample set on which the statistic is undefined."""


class CorruptFileError(AuginvError):
    """Bad magic, version, truncation, or checksum failure in a binary file."""


class CollapseError(AuginvError):
    """Training aborted because the encoder output collapsed persistently."""


class NumericalError(AuginvError):
    """Numerical failure (non-finite gradients, SVD breakdown)."""
