"""Exception hierarchy shared across the package."""


class HipodError(Exception):
    """Base class for all package errors."""


class ConfigError(HipodError, ValueError):
    """Invalid user input: sizes, ranges, specs, or config files."""


class NumericalError(HipodError, ArithmeticError):
    """A factorization, solve, or fit failed numerically."""
