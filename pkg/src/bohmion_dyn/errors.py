"""Exception types shared across the package."""


class BohmionError(Exception):
    """Base class for all package errors."""


class NumericalError(BohmionError, FloatingPointError):
    """A computation produced non-finite values or otherwise could not proceed."""


class NumericalAbort(NumericalError):
    """A time integration stopped; ``last_good`` holds the last finite state."""

    def __init__(self, message, last_good=None, step=None):
        super().__init__(message)
        self.last_good = last_good
        self.step = step


class ConfigError(BohmionError, ValueError):
    """Invalid scenario configuration. ``where`` names the offending field."""

    def __init__(self, message, where=None):
        self.where = where
        super().__init__(f"{where}: {message}" if where else message)
