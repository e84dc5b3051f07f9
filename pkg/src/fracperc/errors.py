"""Exception types shared across the package."""


class FracPercError(Exception):
    """Base class for all library errors."""


class InvalidAddress(FracPercError, ValueError):
    pass


class InsufficientSequence(FracPercError, IndexError):
    """An explicit parameter sequence is shorter than the requested depth."""


class NonExtinctionFailed(FracPercError, RuntimeError):
    """Rejection sampling never produced a surviving realization."""


class DomainError(FracPercError, ValueError):
    pass


class MissingLevel(FracPercError, ValueError):
    pass


class PreconditionError(FracPercError, ValueError):
    pass


class DegenerateMass(FracPercError, ArithmeticError):
    pass


class ScaleError(FracPercError, ValueError):
    pass


class InsufficientData(FracPercError, ValueError):
    pass


class UnsupportedDimension(FracPercError, ValueError):
    pass
