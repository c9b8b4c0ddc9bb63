"""Exception hierarchy shared by every module of the package."""


class SorteError(Exception):
    """Base class for all errors raised by ``sorte``."""


class SchemaError(SorteError):
    """A scenario document does not match the expected layout."""


class ValidationError(SorteError):
    """Inputs are well-formed but violate a modelling invariant."""


class DimensionError(SorteError, ValueError):
    """Array shapes do not agree with the market model."""


class DomainError(SorteError, ValueError):
    """A function was evaluated outside of its domain."""


class NormalizationError(SorteError):
    """A density does not integrate to one."""


class SpecError(SorteError):
    """The constraint family is not supported by the requested routine."""


class ConvergenceError(SorteError):
    """An iterative solver ran out of iterations."""


class BracketError(SorteError):
    """A sign change for a monotone scalar equation could not be found."""


class BoundaryError(SorteError):
    """The dual minimizer escaped to the boundary of its domain."""


class ScaleError(SorteError):
    """The problem is too large for a brute-force routine."""
