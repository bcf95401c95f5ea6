"""Exception types shared across the package.

Each carries the process exit code the CLI maps it to.
"""


class VcathError(Exception):
    exit_code = 1


class ConfigError(VcathError, ValueError):
    exit_code = 2


class DataError(VcathError, ValueError):
    exit_code = 3


class NumericalError(VcathError, ArithmeticError):
    exit_code = 4
