"""Exception types shared across the package.

Two broad families matter to callers: input/configuration problems
(:class:`InputError` subclasses) and numerical failures detected while
computing (:class:`NumericalError` subclasses).  The command line maps
the former to exit code 2 and the latter to exit code 3.
"""


class DcanetError(Exception):
    """Base class for all package-specific errors."""


class InputError(DcanetError):
    """Invalid user input: bad files, bad configuration, bad arguments."""


class NumericalError(DcanetError):
    """A computation failed or reached an invalid numerical state."""


class DomainError(InputError):
    """An argument is outside its mathematical domain."""


class ParseError(InputError):
    """A data file could not be parsed.

    Carries the 1-based row and column of the offending cell when known.
    """

    def __init__(self, message, row=None, column=None):
        if row is not None:
            message = f"{message} (row {row}, column {column})"
        super().__init__(message)
        self.row = row
        self.column = column


class NonNumericCell(ParseError):
    """A cell expected to hold a number does not."""


class NotPositiveDefinite(NumericalError):
    """A matrix required to be positive definite is not."""


class RankDeficient(NumericalError):
    """A regression design does not have full column rank."""


class InsufficientSamples(NumericalError):
    """Too few observations for the requested test."""


class NotConverged(NumericalError):
    """An iterative solver exhausted its iteration budget."""


class InvalidFit(NumericalError):
    """A fitted object fails its own optimality conditions."""


class InfeasibleDegreeSequence(NumericalError):
    """A random graph could not be realized within the retry budget."""


class DimensionTooLarge(InputError):
    """The problem is too large for an enumeration-based diagnostic."""


class UndefinedMetric(NumericalError):
    """A ratio metric has an empty denominator."""


class SimulationError(NumericalError):
    """Too many simulation repetitions failed to produce results."""


class ZeroVarianceColumn(UserWarning):
    """A data column is constant; it is excluded from candidacy."""
