"""Exception and warning types shared across the package."""


class TomographyError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatchError(TomographyError):
    """Operands describe Hilbert spaces of incompatible dimension."""


class NotHermitianError(TomographyError):
    """Matrix deviates from its conjugate transpose beyond tolerance."""


class NotUnitTraceError(TomographyError):
    """Matrix trace differs from one beyond tolerance."""


class NotPSDError(TomographyError):
    """Matrix has an eigenvalue below the positive-semidefinite tolerance."""


class LambdaOutOfRangeError(TomographyError):
    """White-noise mixing weight lies outside [0, 1]."""


class NumericalFailureError(TomographyError):
    """A linear-algebra routine failed to converge or returned garbage."""


class InvalidArgumentsError(TomographyError):
    """Arguments violate a documented precondition."""


class InvalidKError(TomographyError):
    """Flux parameter must be a positive finite number."""


class ZeroTraceError(TomographyError):
    """Density-matrix construction produced a (near-)zero trace."""


class AdaptationFailedError(TomographyError):
    """Step-size adaptation could not reach a usable acceptance rate."""


class EmptyChainError(TomographyError):
    """Estimators need at least one posterior sample."""


class MissingJSISettingError(TomographyError):
    """Dataset lacks the unmodulated first setting needed for flux priors."""


class FitDivergedError(TomographyError):
    """Least-squares fit failed or collapsed to a degenerate solution."""


class InsufficientDataError(TomographyError):
    """Too few samples to constrain the fit parameters."""


class BandOutOfRangeError(TomographyError):
    """Band index must satisfy 1 <= k <= d - 1."""


class SingularInputWarning(UserWarning):
    """QR factor had a zero diagonal entry; input was perturbed."""


class BudgetExhaustedWarning(UserWarning):
    """Convergence threshold not reached within the allowed thinning levels."""
