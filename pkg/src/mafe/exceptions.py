"""Exception hierarchy.

Anything derived from :class:`ValueError` is a validation problem (bad
parameters, malformed files); :class:`NumericalError` covers failures that
happen while computing (divergence, non-finite gradients, calibration that
does not bracket).  The CLI maps the two onto different exit codes.
"""


class MAFEError(Exception):
    """Base class for all package errors."""


class ValidationError(MAFEError, ValueError):
    """Invalid parameter or inconsistent inputs."""


class DataFormatError(ValidationError):
    """A data file could not be parsed."""


class NumericalError(MAFEError, ArithmeticError):
    """A computation failed to produce a finite or converged result."""


class DivergenceError(NumericalError):
    """The optimizer energy blew up."""
