"""Exception types raised by the library."""


class ParameterError(ValueError):
    """An argument lies outside the domain an operation accepts."""


class InvalidStageError(ValueError):
    """A stage index exceeds the horizon of the problem."""


class ScheduleInfeasibleError(RuntimeError):
    """A derandomized level schedule assigns zero replications to some level."""

    def __init__(self, level, message=None):
        self.level = level
        super().__init__(message or f"level {level} receives zero replications")


class InsufficientDataError(ValueError):
    """Too few rows to fit a slope."""


class GuardrailError(RuntimeError):
    """A study would exceed the desk-scale cost budget."""


class UsageError(ValueError):
    """Unknown problem, estimator or malformed configuration."""
