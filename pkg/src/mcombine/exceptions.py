"""Exception types shared across the package.

Validation problems (bad shapes, out-of-domain parameters, malformed
configuration) raise :class:`DomainError`; breakdowns inside a numerical
routine (non-convergence, corrupt covariance input) raise
:class:`NumericalError`.  The CLI maps the former to exit code 1 and the
latter to exit code 2.
"""

from __future__ import annotations


class DomainError(ValueError):
    """An input lies outside the documented domain of an operation."""


class NumericalError(ArithmeticError):
    """A numerical routine failed to produce a trustworthy result."""
