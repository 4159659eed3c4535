"""Symmetric positive (semi)definite kernels.

All kernels evaluate in float64. Squared distances are accumulated one
coordinate at a time as ``sum_k (x_k - y_k)**2`` so that the scalar, paired
and matrix code paths produce bit-identical values and never go through the
cancellation-prone ``<x,x> - 2<x,y> + <y,y>`` expansion.
"""

import numpy as np

from ._validation import check_matrix, check_point

_GRAM_BLOCK = 256


def _sq_dist_rows(X, Y):
    """Squared distances between row ``i`` of X and row ``i`` of Y."""
    out = np.zeros(X.shape[0])
    for k in range(X.shape[1]):
        diff = X[:, k] - Y[:, k]
        out += diff * diff
    return out


def _sq_dist_cross(X, Y):
    """Squared distance matrix, ``D[i, j] = ||X[i] - Y[j]||^2``."""
    out = np.zeros((X.shape[0], Y.shape[0]))
    for k in range(X.shape[1]):
        diff = X[:, k, None] - Y[None, :, k]
        out += diff * diff
    return out


class Kernel:
    """Base class for kernels ``K(x, y)``.

    Subclasses implement :meth:`cross`; the scalar, paired and Gram
    entry points are derived from it.
    """

    tag = None

    def cross(self, X, Y):
        """Return the matrix ``K(X[i], Y[j])``."""
        raise NotImplementedError

    def paired(self, X, Y):
        """Return ``K(X[i], Y[i])`` for each row ``i``."""
        raise NotImplementedError

    def __call__(self, x, y):
        x = check_point(x, "x")
        y = check_point(y, "y")
        if x.shape != y.shape:
            raise ValueError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
        self._check_dim(x.shape[0])
        return float(self.paired(x[None, :], y[None, :])[0])

    def gram(self, X):
        """Gram matrix of the rows of ``X``.

        Only the upper triangle is computed; the lower triangle is a mirror,
        so the result is exactly symmetric.
        """
        X = check_matrix(X, "points", allow_empty=True)
        self._check_dim(X.shape[1])
        S = X.shape[0]
        G = np.empty((S, S))
        for start in range(0, S, _GRAM_BLOCK):
            stop = min(start + _GRAM_BLOCK, S)
            G[start:stop, start:] = self.cross(X[start:stop], X[start:])
        iu = np.triu_indices(S, 1)
        G.T[iu] = G[iu]
        return G

    def _check_dim(self, d):
        pass

    def get_params(self):
        raise NotImplementedError

    def __eq__(self, other):
        if type(self) is not type(other):
            return NotImplemented
        a, b = self.get_params(), other.get_params()
        return a.keys() == b.keys() and all(
            np.array_equal(a[k], b[k]) for k in a
        )

    def __hash__(self):
        return hash(type(self).__name__)

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


class GaussianKernel(Kernel):
    """``K(x, y) = exp(-||x - y||^2 / (2 sigma2))``.

    Parameters
    ----------
    sigma2 : float
        Bandwidth in squared-distance units; must be positive.
    """

    tag = 0

    def __init__(self, sigma2):
        sigma2 = float(sigma2)
        if not np.isfinite(sigma2) or sigma2 <= 0:
            raise ValueError(f"sigma2 must be a positive finite number, got {sigma2}")
        self.sigma2 = sigma2

    def cross(self, X, Y):
        return np.exp(_sq_dist_cross(X, Y) / (-2.0 * self.sigma2))

    def paired(self, X, Y):
        return np.exp(_sq_dist_rows(X, Y) / (-2.0 * self.sigma2))

    def get_params(self):
        return {"sigma2": self.sigma2}


class LinearKernel(Kernel):
    """``K(x, y) = <x, y>``."""

    tag = 1

    def cross(self, X, Y):
        out = np.zeros((X.shape[0], Y.shape[0]))
        for k in range(X.shape[1]):
            out += X[:, k, None] * Y[None, :, k]
        return out

    def paired(self, X, Y):
        out = np.zeros(X.shape[0])
        for k in range(X.shape[1]):
            out += X[:, k] * Y[:, k]
        return out

    def get_params(self):
        return {}


class FiniteRankKernel(Kernel):
    """``K(x, y) = sum_i w_i (u_i . x)(u_i . y)`` with orthonormal ``u_i``.

    Its operator has rank ``len(weights)`` under any density, which makes it
    the exact-recovery test kernel: a rank-``r`` feature map reproduces it.

    Parameters
    ----------
    weights : array-like of shape (r,)
        Strictly positive weights.
    directions : array-like of shape (r, d)
        Mutually orthonormal rows (within 1e-12).
    """

    tag = 2

    def __init__(self, weights, directions):
        weights = np.atleast_1d(np.asarray(weights, dtype=np.float64))
        directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
        if weights.ndim != 1 or directions.shape[0] != weights.shape[0]:
            raise ValueError("need one direction per weight")
        if not (np.all(np.isfinite(weights)) and np.all(np.isfinite(directions))):
            raise ValueError("weights and directions must be finite")
        if np.any(weights <= 0):
            raise ValueError("weights must be strictly positive")
        gram = directions @ directions.T
        if np.max(np.abs(gram - np.eye(len(weights)))) > 1e-12:
            raise ValueError("directions must be mutually orthonormal")
        self.weights = weights
        self.directions = directions

    @property
    def rank(self):
        return self.weights.shape[0]

    def _check_dim(self, d):
        if d != self.directions.shape[1]:
            raise ValueError(
                f"dimension mismatch: kernel is defined on R^{self.directions.shape[1]}, got {d}"
            )

    def _project(self, X):
        # coordinate loop instead of a matmul so results do not depend on
        # which BLAS kernel the batch shape selects
        out = np.zeros((X.shape[0], self.rank))
        for k in range(X.shape[1]):
            out += X[:, k, None] * self.directions[None, :, k]
        return out

    def cross(self, X, Y):
        self._check_dim(X.shape[1])
        px, py = self._project(X), self._project(Y)
        out = np.zeros((X.shape[0], Y.shape[0]))
        for i, w in enumerate(self.weights):
            out += w * (px[:, i, None] * py[None, :, i])
        return out

    def paired(self, X, Y):
        self._check_dim(X.shape[1])
        px, py = self._project(X), self._project(Y)
        out = np.zeros(X.shape[0])
        for i, w in enumerate(self.weights):
            out += w * (px[:, i] * py[:, i])
        return out

    def get_params(self):
        return {"weights": self.weights, "directions": self.directions}


def eval_kernel(kernel, x, y):
    """Evaluate ``kernel`` at a single pair of points."""
    return kernel(x, y)


def build_gram(kernel, points):
    """Exactly symmetric Gram matrix ``G[i, j] = K(points[i], points[j])``."""
    return kernel.gram(points)


def make_kernel(name, **params):
    """Build a kernel from a name: ``"gaussian"``, ``"linear"`` or ``"finite_rank"``."""
    kinds = {"gaussian": GaussianKernel, "linear": LinearKernel, "finite_rank": FiniteRankKernel}
    try:
        cls = kinds[name]
    except KeyError:
        raise ValueError(f"unknown kernel {name!r}; expected one of {sorted(kinds)}") from None
    return cls(**params)
