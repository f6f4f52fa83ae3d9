"""Exception types shared across the package."""


class DataError(Exception):
    """Invalid, missing, or inconsistent input data."""


class NumericError(Exception):
    """Numerical failure (divergence, NaN, undefined ratio)."""
