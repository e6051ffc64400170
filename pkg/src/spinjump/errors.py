"""Exception types shared across the package."""


class CapacityError(ValueError):
    """Requested Hilbert space exceeds the supported size cap."""


class ConfigError(ValueError):
    """Invalid configuration value or malformed config file."""


class ContractError(ValueError):
    """An input violates a documented precondition, e.g. unit trace."""


class StepSizeError(ValueError):
    """Time step too coarse for the first-order jump scheme."""


class UnsupportedModelError(ValueError):
    """Model and parameter combination outside the supported scope."""


class SingularProjectionError(ArithmeticError):
    """Projection weight vanished; the conditional state is undefined."""


class NumericalFailureError(RuntimeError):
    """Integration produced an invalid state (hermiticity or positivity lost)."""

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message)
        self.t = t
