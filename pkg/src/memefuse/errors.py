"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2, bad input
data exits 3 and numerical divergence exits 4.
"""


class MemefuseError(Exception):
    exit_code = 1


class ShapeError(MemefuseError, ValueError):
    exit_code = 2


class ConfigError(MemefuseError, ValueError):
    exit_code = 2


class UsageError(MemefuseError, ValueError):
    exit_code = 2


class EmptyInputError(UsageError):
    pass


class DataError(MemefuseError, ValueError):
    exit_code = 3


class DivergenceError(MemefuseError, ArithmeticError):
    exit_code = 4
