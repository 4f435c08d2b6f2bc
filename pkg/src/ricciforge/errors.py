"""Exception hierarchy shared by every layer of the package."""


class RicciForgeError(Exception):
    """Base class for all errors raised by ricciforge."""


class DimensionMismatchError(RicciForgeError, ValueError):
    pass


class OrderExhaustedError(RicciForgeError):
    """A jet has no valid Taylor orders left for the requested derivative."""


class DegenerateMetricError(RicciForgeError, ValueError):
    pass


class ParameterGuardError(RicciForgeError, ValueError):
    """Raised when kappa hits one of the excluded values for Ein-type operators."""


class MissingDirectionError(RicciForgeError, ValueError):
    pass


class KernelAmbiguityError(RicciForgeError):
    """An eigenvalue sits in the grey zone between kernel and spectrum."""


class ZeroMultiplierError(RicciForgeError, ZeroDivisionError):
    def __init__(self, message, mode=None):
        super().__init__(message)
        self.mode = mode


class ConfigError(RicciForgeError, ValueError):
    pass


class BoundViolationError(RicciForgeError):
    """A pointwise eigenvalue bound failed; points to a convention error upstream."""
