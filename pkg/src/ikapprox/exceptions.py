"""Exception types raised by ikapprox."""

import numpy as np


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Cholesky pivot fell below the positive-definiteness threshold.

    Attributes
    ----------
    pivot : int
        Zero-based index of the failing pivot.
    """

    def __init__(self, pivot, value=None):
        self.pivot = int(pivot)
        self.value = value
        msg = f"matrix is not positive definite (pivot {self.pivot}"
        if value is not None:
            msg += f", value {value:.3e}"
        super().__init__(msg + ")")


class EigenNonConvergence(np.linalg.LinAlgError):
    """The tridiagonal QL iteration hit its iteration cap."""

    def __init__(self, index, iterations):
        self.index = int(index)
        self.iterations = int(iterations)
        super().__init__(
            f"eigenvalue {self.index} did not converge after {self.iterations} iterations"
        )


class RankDeficientBasis(ValueError):
    """The basis is not linearly independent on the fitting sample."""

    def __init__(self, pivot):
        self.pivot = int(pivot)
        super().__init__(
            f"basis matrix is rank deficient on the sample (Cholesky pivot {self.pivot} "
            "failed even after jitter); remove duplicate filters or enlarge the sample"
        )


class NegativeEigenvalue(ValueError):
    """A retained eigenvalue is negative beyond round-off."""


class DegenerateLandmarks(ValueError):
    """Every eigenvalue of the landmark Gram matrix was numerically zero."""


class FormatError(ValueError):
    """Base class for binary file format errors."""


class BadMagic(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class TruncatedFile(FormatError):
    pass
