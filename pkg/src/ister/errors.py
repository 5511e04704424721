"""Exception types shared across the package."""


class IsterError(Exception):
    """Base class for every error this package raises on purpose."""


class ShapeError(IsterError, ValueError):
    """An operand has a shape the operation cannot accept."""


class ConfigError(IsterError, ValueError):
    """A configuration file or value is invalid."""


class DataError(IsterError, ValueError):
    """Input data is missing, malformed, or violates an invariant."""


class NumericError(IsterError, ArithmeticError):
    """A computation produced non-finite values or diverged."""


class TapeError(IsterError, RuntimeError):
    """The autodiff tape was used in an unsupported way."""
