"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
NumericalError -> 3.
"""


class VampCFError(Exception):
    """Base class for package errors."""


class ShapeError(VampCFError):
    """Operands have incompatible dimensions."""


class ConfigError(VampCFError):
    """Invalid configuration or precondition violation."""


class DataError(VampCFError):
    """Malformed or unusable input data."""


class NumericalError(VampCFError):
    """Non-finite values where finite ones are required."""
