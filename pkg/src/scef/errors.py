"""Exception hierarchy shared by every module of the package."""


class ScefError(Exception):
    """Base class for all package errors."""


class DimensionError(ScefError, ValueError):
    """Array shapes are inconsistent or empty."""


class NumericError(ScefError, ArithmeticError):
    """Non-finite values or a numerical failure (e.g. divergence)."""


class ParameterError(ScefError, ValueError):
    """A scalar argument is outside its allowed range."""


class FormatError(ScefError, ValueError):
    """A file or container could not be parsed."""


class ConfigError(ScefError, ValueError):
    """A network or training configuration is invalid."""


class PreconditionError(ScefError, ValueError):
    """Inputs violate the hypotheses an operation relies on."""


class ConsistencyError(ScefError, ValueError):
    """A series of objects that should agree (e.g. checkpoints) do not."""
