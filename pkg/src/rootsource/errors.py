"""Exception types shared across the package.

The CLI maps ValidationError to exit code 2 and NumericalError to exit
code 3; everything else is an ordinary crash.
"""


class ValidationError(ValueError):
    """Malformed inputs: bad shapes, labels out of range, broken invariants."""


class NumericalError(RuntimeError):
    """Numerical failure at runtime: degenerate weights, NaN objective, runaway cascade."""
