"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class ShapeError(ValueError):
    """Array shapes or lattices of two operands do not match."""


class ResourceError(MemoryError):
    """A requested array would exceed the storage cap for two-point fields."""


class UnsupportedDimensionError(ValueError):
    pass


class CertificationError(ArithmeticError):
    """A potential violated one of its claimed bounds.

    ``witness`` holds the offending argument ``z``.
    """

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class SamplingError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    pass
