"""Exception hierarchy shared by all modules."""


class CvxRegError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(CvxRegError, ValueError):
    pass


class NonFiniteInput(CvxRegError, ValueError):
    pass


class NonPositiveRho(CvxRegError, ValueError):
    pass


class PositiveLambda(CvxRegError, ValueError):
    pass


class IndexOutOfRange(CvxRegError, IndexError):
    pass


class EmptyActiveSet(CvxRegError, ValueError):
    pass


class NonFiniteGradient(CvxRegError, FloatingPointError):
    pass


class NonFiniteObjective(CvxRegError, FloatingPointError):
    pass


class ExhaustedCandidates(CvxRegError):
    """Raised when a sampling population is empty."""


class InstanceTooLarge(CvxRegError, ValueError):
    pass


class ParseError(CvxRegError, ValueError):
    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class DomainError(ParseError):
    """A transform was applied outside its mathematical domain."""


class MissingColumn(CvxRegError, KeyError):
    pass


class EmptyAfterFilter(CvxRegError, ValueError):
    pass


class DegenerateColumn(CvxRegError, ValueError):
    pass


class LengthMismatch(CvxRegError, ValueError):
    pass
