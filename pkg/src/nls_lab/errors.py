"""Exception and warning types raised across the package."""


class NlsLabError(Exception):
    """Base class for all package errors."""


class NumericalFailure(NlsLabError):
    """A computation ran but its result cannot be trusted."""


class NonPowerOfTwo(NlsLabError, ValueError):
    pass


class GridMismatch(NlsLabError, ValueError):
    pass


class TruncationRisk(NlsLabError, ValueError):
    pass


class MassDrift(NumericalFailure):
    pass


class NoConvergence(NumericalFailure):
    pass


class QuadratureBudgetExceeded(NumericalFailure):
    pass


class NormalizationUnderflow(NumericalFailure):
    pass


class EmptyProbeSet(NlsLabError, ValueError):
    pass


class PoleAtTwo(NlsLabError, ValueError):
    pass


class DivergentAtZero(NlsLabError, ValueError):
    pass


class SigmaTooLarge(NlsLabError, ValueError):
    pass


class DistanceNotSmall(NlsLabError, ValueError):
    pass


class DegenerateFit(NlsLabError, ValueError):
    pass


class ConfigError(NlsLabError, ValueError):
    """Invalid experiment configuration; message names the offending field."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class NotSmallData(UserWarning):
    """Initial data is not inside the configured small-data ball."""
