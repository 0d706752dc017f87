"""Exception types shared across the package."""


class Bmm2dError(Exception):
    """Base class for all package errors."""


class DomainError(Bmm2dError):
    """An argument violates a documented precondition (infeasible params, bad shape, ...)."""


class DegenerateInputError(Bmm2dError):
    """Data admits no estimate (singular normal equations, zero residual scale, ...)."""


class FormatError(Bmm2dError):
    """A file does not parse as the expected on-disk format."""


class UndefinedIndexError(Bmm2dError):
    """A similarity index is undefined for the given inputs (zero denominator)."""
