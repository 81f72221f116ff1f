"""
Exception types for the occupation-time verification toolkit.
"""


class VerificationError(Exception):
    """Base class for every error raised by the toolkit."""


class DomainError(VerificationError, ValueError):
    """A point or region lies outside the domain where a formula is defined."""


class ConfigurationError(VerificationError, ValueError):
    """Invalid parameters, malformed config files or exceeded budgets."""


class PrecisionError(VerificationError):
    """A numerical scheme did not reach its tolerance.

    Attributes:
        previous: Second-to-last iterate
        current: Last iterate
    """

    def __init__(self, message: str, previous: float, current: float):
        super().__init__(f"{message} (previous={previous!r}, current={current!r})")
        self.previous = previous
        self.current = current


class TruncationError(VerificationError):
    """A sampler ran out of its step budget; the partial path is attached."""

    def __init__(self, message: str, partial_path):
        super().__init__(message)
        self.partial_path = partial_path


class EstimationError(VerificationError):
    """Monte Carlo estimation produced no usable samples."""


class ModelError(VerificationError):
    """Lattice model is malformed or a linear solve failed."""


class CalibrationWarning(UserWarning):
    """Lattice calibration residuals did not behave as expected."""
