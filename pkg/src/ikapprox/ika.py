"""Kernel eigenfunction projection onto the span of an arbitrary basis.

Given basis functions ``b_1..b_n`` and a sample ``y_1..y_S`` drawn from the
data density, the leading eigenfunctions of the kernel operator restricted
to ``span{b_j}`` solve the generalized eigenproblem ``M v = lambda P v`` with
the empirical estimates

    P = B^T B / S,        M = B^T G B / S^2,

where ``B[h, j] = b_j(y_h)`` and ``G`` is the Gram matrix of the sample. The
resulting feature map is ``psi(x)_i = sqrt(lambda_i) * sum_j V[j, i] b_j(x)``.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from ._validation import check_matrix, check_point, check_positive_int
from .exceptions import NegativeEigenvalue, NotPositiveDefinite, RankDeficientBasis
from .kernels import Kernel
from .linalg import solve_generalized_eig

NEGATIVE_EIGENVALUE_TOL = 1e-10
JITTER_SCALE = 1e-10


class BasisSet:
    """A family of ``n`` real functions on R^d.

    Subclasses implement :meth:`evaluate`. Nothing else in the fitting code
    depends on the basis type, so new families only need that one method.
    """

    tag = None

    @property
    def n_functions(self):
        raise NotImplementedError

    @property
    def n_features(self):
        raise NotImplementedError

    def evaluate(self, X):
        """Return ``B`` with ``B[h, j] = b_j(X[h])``."""
        raise NotImplementedError


class KernelCenteredBasis(BasisSet):
    """``b_j(x) = K(w_j, x)`` for filters ``w_j``.

    Parameters
    ----------
    kernel : Kernel
    filters : array-like of shape (n, d)
    """

    tag = 0

    def __init__(self, kernel, filters):
        if not isinstance(kernel, Kernel):
            raise TypeError(f"kernel must be a Kernel instance, got {type(kernel).__name__}")
        self.kernel = kernel
        self.filters = check_matrix(filters, "filters")
        if np.unique(self.filters, axis=0).shape[0] < self.filters.shape[0]:
            warnings.warn(
                "duplicate filter rows make the basis rank deficient",
                RuntimeWarning,
                stacklevel=2,
            )

    @property
    def n_functions(self):
        return self.filters.shape[0]

    @property
    def n_features(self):
        return self.filters.shape[1]

    def evaluate(self, X):
        return self.kernel.cross(X, self.filters)

    def __eq__(self, other):
        if not isinstance(other, KernelCenteredBasis):
            return NotImplemented
        return self.kernel == other.kernel and np.array_equal(self.filters, other.filters)

    def __hash__(self):
        return hash((self.tag, self.filters.shape))

    def __repr__(self):
        return f"KernelCenteredBasis({self.kernel!r}, n={self.n_functions})"


class MonomialBasis(BasisSet):
    """Coordinate functions ``x_1..x_d``, optionally followed by the constant 1."""

    tag = 1

    def __init__(self, n_features, include_constant=False):
        self._n_features = check_positive_int(n_features, "n_features")
        self.include_constant = bool(include_constant)

    @property
    def n_functions(self):
        return self._n_features + int(self.include_constant)

    @property
    def n_features(self):
        return self._n_features

    def evaluate(self, X):
        if self.include_constant:
            return np.hstack([X, np.ones((X.shape[0], 1))])
        return X.copy()

    def __eq__(self, other):
        if not isinstance(other, MonomialBasis):
            return NotImplemented
        return (self._n_features, self.include_constant) == (other._n_features, other.include_constant)

    def __hash__(self):
        return hash((self.tag, self._n_features, self.include_constant))

    def __repr__(self):
        return f"MonomialBasis({self._n_features}, include_constant={self.include_constant})"


def build_basis_matrix(basis, points):
    """Evaluate every basis function at every point: ``B[i, j] = b_j(points[i])``.

    Raises
    ------
    ValueError
        If a basis function returns a non-finite value; the message names the
        first offending ``(i, j)``.
    """
    points = check_matrix(points, "points", n_features=basis.n_features)
    B = np.asarray(basis.evaluate(points), dtype=np.float64)
    if B.shape != (points.shape[0], basis.n_functions):
        raise ValueError(
            f"basis returned shape {B.shape}, expected {(points.shape[0], basis.n_functions)}"
        )
    bad = np.argwhere(~np.isfinite(B))
    if bad.size:
        i, j = bad[0]
        raise ValueError(f"basis function {j} is not finite at point {i}")
    return B


def _mirror_upper(A):
    iu = np.triu_indices(A.shape[0], 1)
    A.T[iu] = A[iu]
    return A


def estimate_p(B):
    """Empirical inner-product matrix ``B^T B / S``, exactly symmetric."""
    B = check_matrix(B, "B")
    return _mirror_upper((B.T @ B) / B.shape[0])


def estimate_m(B, G):
    """Empirical operator matrix ``B^T G B / S^2``, exactly symmetric."""
    B = check_matrix(B, "B")
    G = np.asarray(G, dtype=np.float64)
    S = B.shape[0]
    if G.shape != (S, S):
        raise ValueError(f"G must have shape {(S, S)} to match B, got {G.shape}")
    return _mirror_upper((B.T @ (G @ B)) / float(S) ** 2)


def solve_with_jitter(M, P):
    """Solve ``M v = lambda P v``, retrying once with ``P + eps I`` if P is singular.

    ``eps = 1e-10 * trace(P) / n``. A second failure raises
    :class:`RankDeficientBasis`.
    """
    try:
        return solve_generalized_eig(M, P)
    except NotPositiveDefinite:
        n = P.shape[0]
        jitter = JITTER_SCALE * np.trace(P) / n
        warnings.warn(
            f"P is not numerically positive definite; retrying with jitter {jitter:.3e}",
            RuntimeWarning,
            stacklevel=3,
        )
        try:
            return solve_generalized_eig(M, P + jitter * np.eye(n))
        except NotPositiveDefinite as exc:
            raise RankDeficientBasis(exc.pivot) from exc


def clamp_eigenvalues(eigenvalues):
    """Zero out round-off negatives; raise on anything more negative than ``-1e-10 * lambda_1``."""
    lam = np.array(eigenvalues, dtype=np.float64)
    if lam.size == 0:
        return lam
    tol = NEGATIVE_EIGENVALUE_TOL * max(lam[0], 0.0)
    if np.any(lam < -tol):
        raise NegativeEigenvalue(
            f"eigenvalue {lam.min():.3e} is below -{NEGATIVE_EIGENVALUE_TOL:g} * lambda_1"
        )
    lam[lam < 0] = 0.0
    return lam


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """``psi(x)_i = sqrt(eigenvalues[i]) * sum_j coefficients[j, i] * b_j(x)``.

    Attributes
    ----------
    basis : BasisSet
    eigenvalues : ndarray of shape (m,)
        Non-negative, decreasing.
    coefficients : ndarray of shape (n, m)
    kernel : Kernel or None
        The kernel this map approximates, kept so a saved model can be
        evaluated on its own.
    """

    basis: BasisSet
    eigenvalues: np.ndarray
    coefficients: np.ndarray
    kernel: Kernel = None

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=np.float64)
        V = np.asarray(self.coefficients, dtype=np.float64)
        if V.ndim != 2 or V.shape[0] != self.basis.n_functions or V.shape[1] != lam.shape[0]:
            raise ValueError(
                f"coefficients must have shape (n={self.basis.n_functions}, m={lam.shape[0]})"
            )
        if np.any(lam < 0) or np.any(np.diff(lam) > 0):
            raise ValueError("eigenvalues must be non-negative and non-increasing")
        lam.flags.writeable = False
        V.flags.writeable = False
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "coefficients", V)

    @property
    def n_components(self):
        return self.eigenvalues.shape[0]

    @property
    def n_features(self):
        return self.basis.n_features

    def transform(self, X):
        """Map the rows of ``X``; returns an array of shape (len(X), m)."""
        B = build_basis_matrix(self.basis, X)
        return B @ (self.coefficients * np.sqrt(self.eigenvalues))

    def approximate_kernel(self, X, Y):
        """``<psi(X[i]), psi(Y[j])>`` for all pairs."""
        return self.transform(X) @ self.transform(Y).T

    def save(self, path):
        from .dataio import write_feature_map

        write_feature_map(path, self)

    @classmethod
    def load(cls, path):
        from .dataio import read_feature_map

        return read_feature_map(path)


def apply_feature_map(fm, x):
    """Evaluate ``psi`` at one point."""
    x = check_point(x)
    return fm.transform(x[None, :])[0]


def fit_ika(kernel, sample, basis, m):
    """Fit the projected-eigenfunction feature map.

    Parameters
    ----------
    kernel : Kernel
        Kernel to approximate.
    sample : array-like of shape (S, d)
        Points drawn from the data density.
    basis : BasisSet
        ``n`` functions spanning the approximation space.
    m : int
        Number of output features, ``1 <= m <= n``.

    Returns
    -------
    FeatureMap
        The top-``m`` eigenpairs of the full ``n``-pair solve.

    Raises
    ------
    RankDeficientBasis
        If P stays singular after one jitter retry.
    NegativeEigenvalue
        If a retained eigenvalue is negative beyond round-off.
    """
    sample = check_matrix(sample, "sample", n_features=basis.n_features)
    n = basis.n_functions
    m = check_positive_int(m, "m")
    if m > n:
        raise ValueError(f"m={m} exceeds the number of basis functions n={n}")
    S = sample.shape[0]
    if S < n:
        warnings.warn(
            f"sample size S={S} is smaller than the basis size n={n}; P will be singular",
            RuntimeWarning,
            stacklevel=2,
        )
    B = build_basis_matrix(basis, sample)
    G = kernel.gram(sample)
    P = estimate_p(B)
    M = estimate_m(B, G)
    del G
    solution = solve_with_jitter(M, P)
    eigenvalues = clamp_eigenvalues(solution.eigenvalues[:m])
    return FeatureMap(basis, eigenvalues, solution.eigenvectors[:, :m].copy(), kernel)
