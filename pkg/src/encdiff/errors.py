"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, NumericsError -> 3,
verification failures -> 1.
"""


class ConfigError(ValueError):
    """Invalid configuration: bad flag values, mismatched dimensions, missing files."""


class NumericsError(ArithmeticError):
    """A numerical computation produced non-finite values or was otherwise rejected."""


class UnusedParameterError(ValueError):
    """A gradient was requested for a parameter that never entered the computation."""
