"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates an operation's preconditions."""


class NumericOverflowError(FloatingPointError):
    """A loss or parameter became non-finite (usually a learning-rate blow-up)."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class CapacityError(RuntimeError):
    """A request exceeds a configured size cap."""


class InfeasibleThresholdError(ValueError):
    """No (or not enough) architectures exist beyond the requested distance."""


class UndefinedStatisticError(ValueError):
    """A statistic is undefined for the given input (e.g. all ties)."""


class ConfigError(ValueError):
    """Malformed or incomplete run configuration."""


class StandaloneTrainingError(RuntimeError):
    """Stand-alone training of an architecture diverged."""
