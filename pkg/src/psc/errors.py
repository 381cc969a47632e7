"""Exception hierarchy shared across the package."""


class PSCError(Exception):
    """Base class for all package errors."""


class DomainError(PSCError, ValueError):
    """An argument lies outside the domain of a function."""


class NumericalError(PSCError, ArithmeticError):
    """A numerical routine produced or met a non-finite value."""


class EstimationError(PSCError):
    """A nuisance fit or estimating equation could not be solved."""


class UnidentifiedModelError(EstimationError):
    """The working model is not identified on the fitted support."""


class NoOverlapError(EstimationError):
    pass


class SeparationError(EstimationError):
    pass


class InsufficientDataError(EstimationError):
    pass


class ConfigError(PSCError, ValueError):
    pass


class SchemaError(PSCError, ValueError):
    """Input file is missing a required column or is malformed."""


class ValidationError(PSCError, ValueError):
    pass
