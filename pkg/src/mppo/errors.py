"""Exception types shared across the package."""


class MPPOError(Exception):
    """Base class for all errors raised by this package."""


class InputError(MPPOError, ValueError):
    """An argument has the wrong shape, length or value."""


class StateError(MPPOError, RuntimeError):
    """An object was used in a state that does not allow the call."""


class NumericalError(MPPOError, ArithmeticError):
    """A computation produced a non-finite result."""


class ConfigError(MPPOError, ValueError):
    """A hyperparameter or run configuration is invalid."""
