"""Exception hierarchy shared across the package.

Every error maps to one CLI exit code (see ``exit_code``).
"""

from __future__ import annotations


class MatKendallError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ParameterError(MatKendallError, ValueError):
    """Invalid argument or configuration value."""

    exit_code = 2


class FormatError(MatKendallError, ValueError):
    """Input file does not conform to its declared format."""

    exit_code = 3


class ValidationError(MatKendallError, ValueError):
    """Data content violates an invariant (non-finite values, bad tables, ...)."""

    exit_code = 3


class DegenerateError(MatKendallError, ArithmeticError):
    """Numerical degeneracy: tied pairs, zero spectra, constant windows."""

    exit_code = 4
