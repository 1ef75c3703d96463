"""Exception hierarchy shared by all modules."""


class GradSurgeryError(Exception):
    """Base class for every error raised by this package."""


class ZeroVector(GradSurgeryError, ValueError):
    pass


class DimensionMismatch(GradSurgeryError, ValueError):
    pass


class OutOfRange(GradSurgeryError, ValueError):
    pass


class Degenerate(GradSurgeryError, ValueError):
    pass


class DegenerateTriplet(Degenerate):
    pass


class MismatchedStats(GradSurgeryError, ValueError):
    pass


class InsufficientData(GradSurgeryError, ValueError):
    pass


class DegenerateBatch(GradSurgeryError, ValueError):
    pass


class KTooLarge(GradSurgeryError, ValueError):
    pass


class NonFiniteGradient(GradSurgeryError, FloatingPointError):
    def __init__(self, message, triplet=None):
        super().__init__(message)
        self.triplet = triplet


class ParseError(GradSurgeryError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(GradSurgeryError, ValueError):
    pass
