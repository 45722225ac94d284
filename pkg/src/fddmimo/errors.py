"""Exception types shared across the package.

Everything derives from ValueError so callers that only care about
"bad input" can catch one class.
"""


class ShapeMismatchError(ValueError):
    """Operands have incompatible dimensions."""


class NotHermitianError(ValueError):
    """Matrix expected to be Hermitian is not, beyond tolerance."""


class NotPsdError(ValueError):
    """Matrix has an eigenvalue below the negative-clipping tolerance."""


class EmptyDatasetError(ValueError):
    """Training requested on a dataset with no usable samples."""


class NonFiniteLossError(ValueError):
    """Loss became NaN or infinite during training."""


class ZeroTrueCovarianceError(ValueError):
    """Reference covariance is identically zero, metric undefined."""


class InvalidOrderError(ValueError):
    """Subspace order q outside 1..M."""


class SingularSystemError(ValueError):
    """Linear system too ill-conditioned to solve reliably."""


class RankDeficientError(ValueError):
    """Effective channel matrix is numerically rank deficient."""


class LpNumericalFailureError(RuntimeError):
    """Simplex did not reach a conclusive status within its iteration cap."""
