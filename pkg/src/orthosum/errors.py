"""Exception types shared across the package."""


class OrthosumError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(OrthosumError, ValueError):
    """A family parameter or argument violates its stated constraint."""


class DegenerateParameterError(OrthosumError, ValueError):
    """t = 0: the partial-sum deformation degenerates to the constant 1."""


class DivergentParametersError(OrthosumError, ValueError):
    """Generating-function comparison requested outside the convergence region."""


class IllConditionedFitError(OrthosumError, ArithmeticError):
    """Polynomial fit residual exceeded the allowed bound."""


class QRConvergenceError(OrthosumError, ArithmeticError):
    """The eigenvalue iteration failed to converge."""

    def __init__(self, msg, unreduced=None):
        super().__init__(msg)
        self.unreduced = unreduced


class ClassificationError(OrthosumError, ArithmeticError):
    """A non-real zero could not be paired with a conjugate partner."""


class LengthMismatchError(OrthosumError, ValueError):
    """Interlacing check requires |outer| == |inner| + 1."""


class NoHullError(OrthosumError, ValueError):
    """The family does not declare a support hull."""


class NoUpperBracketError(OrthosumError, ArithmeticError):
    """Doubling never reached an all-real zero configuration."""


class NoDoubleZeroError(OrthosumError, ArithmeticError):
    """No admissible double-zero parameter was found."""


class VerificationFailedError(OrthosumError, ArithmeticError):
    """A cross-check bound was violated."""
