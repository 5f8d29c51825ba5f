"""Exception hierarchy.

The CLI maps :class:`DataError` to exit code 2 and :class:`NumericalError`
to exit code 3, so every module raises a subclass of one of the two.
"""


class TTEKFError(Exception):
    """Base class for all package errors."""


class DataError(TTEKFError, ValueError):
    """Input data cannot be used as given."""


class NumericalError(TTEKFError, ArithmeticError):
    """A computation produced an inconsistent or non-finite result."""


class NegativeDiscriminant(NumericalError):
    pass


class InvalidPair(DataError):
    pass


class SingularInnovation(NumericalError):
    pass


class TooFewMeasurements(DataError):
    pass


class TooShort(DataError):
    pass


class NonFiniteGradient(NumericalError):
    pass


class BadKnots(DataError):
    pass


class DegenerateDesign(DataError):
    pass


class DegenerateDisplacement(DataError):
    pass
