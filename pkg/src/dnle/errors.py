"""Exception types shared across the package."""


class DNLEError(Exception):
    """Base class for package errors."""


class InvalidParameters(DNLEError, ValueError):
    pass


class RegimeError(DNLEError, ValueError):
    """Operation is not defined for the parameter regime."""


class NonConvergence(DNLEError, RuntimeError):
    """An iterative solver exhausted its budget."""


class IntegrationFailure(DNLEError, RuntimeError):
    pass


class NoCrossing(DNLEError):
    """Profile stayed positive up to r_max. The integrated curve is attached."""

    def __init__(self, message, curve=None):
        super().__init__(message)
        self.curve = curve


class Infeasible(DNLEError, ValueError):
    pass


class EmptyRegion(DNLEError, ValueError):
    pass


class Unreached(DNLEError, RuntimeError):
    pass


class NotConverged(DNLEError, RuntimeError):
    pass


class SandwichFailure(DNLEError, RuntimeError):
    pass


class ConfigError(DNLEError, ValueError):
    pass
