"""Exception hierarchy.

Validation problems (bad parameters, malformed configuration) derive from
:class:`ConfigurationError`; everything that goes wrong while computing
derives from :class:`NumericalError`.  The command line maps the two
families to exit codes 2 and 3.
"""


class DkpLabError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DkpLabError, ValueError):
    """A parameter or configuration entry violates a precondition."""


class NotApplicableError(DkpLabError):
    """The requested quantity is undefined for this input (e.g. no gradient)."""


class DegenerateInputError(ConfigurationError):
    """Input is identically zero where a nonzero input is required."""


class NumericalError(DkpLabError, ArithmeticError):
    """A numerical procedure failed."""


class FieldError(NumericalError):
    """Evaluating a coefficient field failed at a given point."""

    def __init__(self, message, point=None):
        super().__init__(message if point is None else f"{message} at point {point}")
        self.point = point


class QuadratureError(NumericalError):
    """Quadrature refinement did not reach the requested tolerance."""

    def __init__(self, message, change=None):
        super().__init__(message)
        self.change = change


class ConvergenceError(NumericalError):
    """An iterative solver did not converge."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []


class NotInvertibleError(NumericalError):
    """The change of variables has a nonpositive Jacobian determinant."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class EpsilonUnreachableError(NumericalError):
    """No mollification scale on the ladder achieves the requested epsilon."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
