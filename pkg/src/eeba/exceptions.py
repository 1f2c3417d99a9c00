"""Exception types raised by the library."""


class EebaError(Exception):
    """Base class for all library errors."""


class DimensionError(EebaError, ValueError):
    """Array shapes are inconsistent or a stream count exceeds the channel size."""


class RankDeficiencyError(EebaError, ValueError):
    """A retained singular value is too small relative to the largest one."""


class DomainError(EebaError, ValueError):
    """An argument lies outside the domain of a function (bit count, q value, ...)."""


class SingularityError(EebaError, ZeroDivisionError):
    """A denominator vanished (zero noise-plus-distortion power, zero singular value)."""


class InfeasibleBudgetError(EebaError, ValueError):
    """No bit vector satisfies the ADC power budget."""

    def __init__(self, message, budget=None, minimum=None):
        super().__init__(message)
        self.budget = budget
        self.minimum = minimum


class ConfigError(EebaError, ValueError):
    """An experiment configuration field is missing or invalid."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
