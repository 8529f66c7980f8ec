"""
Exception hierarchy shared by every subpackage.
"""


class SlaterError(Exception):
    """Base class for all errors raised by this package."""

    exit_code: int = 1


class ConfigError(SlaterError, ValueError):
    """Invalid configuration, flags or unsatisfiable settings."""

    exit_code = 2


class ShapeError(SlaterError, ValueError):
    """Shapes or data layouts that do not fit together."""

    exit_code = 3


class DimensionError(ShapeError):
    """An operand has the wrong extents or rank for an operation."""


class ContractError(ShapeError):
    """A caller broke an operation's calling contract."""


class NumericError(SlaterError, ArithmeticError):
    """NaN or otherwise unusable numeric values."""

    exit_code = 4


class SetupError(SlaterError):
    """An experiment was set up in a way that cannot answer its question."""

    exit_code = 2
