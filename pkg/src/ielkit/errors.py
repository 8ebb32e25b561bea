"""Exception taxonomy shared across the package."""


class IelkitError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(IelkitError, ValueError):
    """Array dimensions do not satisfy an operation's contract."""


class ConfigError(IelkitError, ValueError):
    """Invalid configuration value (bad kernel size, boundary mode, ...)."""


class UsageError(IelkitError, ValueError):
    """An operation was invoked with unusable arguments (empty inputs, ...)."""


class DataError(IelkitError, ValueError):
    """Data content violates a contract (label ids out of range, ...)."""


class DomainError(IelkitError, ValueError):
    """A value lies outside the mathematical domain of an operation."""


class NumericsError(IelkitError, ArithmeticError):
    """A numerical computation produced non-finite values."""
