"""Dense symmetric linear algebra.

Cholesky factorization, a symmetric eigensolver (Householder reduction to
tridiagonal form followed by implicit-shift QL), and the generalized
symmetric-definite eigensolver built on top of them. Sizes here are at most
a few hundred, so everything is dense O(n^3).
"""

import math
from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_triangular

from ._validation import check_square_symmetric
from .exceptions import EigenNonConvergence, NotPositiveDefinite

MAX_QL_ITERATIONS = 30
_EPS = np.finfo(np.float64).eps


class GeneralizedEigenSolution(NamedTuple):
    """Eigenpairs of ``M v = lambda P v``.

    ``eigenvalues`` are sorted in decreasing order and column ``i`` of
    ``eigenvectors`` pairs with ``eigenvalues[i]``. The eigenvectors are
    P-orthonormal: ``V.T @ P @ V == I``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def symmetric(A):
    """Return a copy of ``A`` whose lower triangle mirrors its upper triangle."""
    A = check_square_symmetric(A)
    out = np.triu(A)
    iu = np.triu_indices(A.shape[0], 1)
    out.T[iu] = A[iu]
    return out


def cholesky(A):
    """Lower-triangular ``L`` with ``L @ L.T == A``.

    Raises
    ------
    NotPositiveDefinite
        If a pivot is ``<= n * eps * max|A_ii|``. The exception carries the
        zero-based pivot index.
    """
    A = check_square_symmetric(A)
    n = A.shape[0]
    L = np.zeros_like(A)
    if n == 0:
        return L
    tol = n * _EPS * np.max(np.abs(np.diag(A)))
    for j in range(n):
        row = L[j, :j]
        pivot = A[j, j] - row @ row
        if not pivot > tol:
            raise NotPositiveDefinite(j, pivot)
        ljj = math.sqrt(pivot)
        L[j, j] = ljj
        if j + 1 < n:
            L[j + 1:, j] = (A[j + 1:, j] - L[j + 1:, :j] @ row) / ljj
    return L


def _tridiagonalize(A):
    """Householder reduction ``A = Q T Q^T``; returns diag, off-diag and Q."""
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    Q = np.eye(n)
    for k in range(n - 2):
        x = A[k + 1:, k]
        norm_x = np.linalg.norm(x)
        if norm_x == 0.0:
            continue
        alpha = -math.copysign(norm_x, x[0])
        v = x.copy()
        v[0] -= alpha
        v /= np.linalg.norm(v)
        sub = A[k + 1:, k + 1:]
        p = sub @ v
        w = p - (v @ p) * v
        # v w^T + w v^T is exactly symmetric elementwise
        sub -= 2.0 * (np.outer(v, w) + np.outer(w, v))
        A[k + 1:, k] = 0.0
        A[k, k + 1:] = 0.0
        A[k + 1, k] = A[k, k + 1] = alpha
        Qs = Q[:, k + 1:]
        Qs -= 2.0 * np.outer(Qs @ v, v)
    d = np.diag(A).copy()
    e = np.zeros(n)
    if n > 1:
        e[:-1] = np.diag(A, 1)
    return d, e, Q


def _tridiagonal_ql(d, e, Zt):
    """Implicit-shift QL on a symmetric tridiagonal matrix, in place.

    ``e[i]`` couples ``d[i]`` and ``d[i + 1]``; ``Zt`` holds eigenvectors as
    rows and receives every plane rotation.
    """
    n = d.shape[0]
    # norm-relative deflation: eigenvalues at the round-off floor can never
    # satisfy a purely local test because every sweep re-injects eps*||T||
    floor = _EPS * float(np.max(np.abs(d) + np.abs(e) + np.abs(np.roll(e, 1))))
    for l in range(n):
        iterations = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= _EPS * dd or abs(e[m]) <= floor:
                    break
                m += 1
            if m == l:
                break
            if iterations == MAX_QL_ITERATIONS:
                raise EigenNonConvergence(l, iterations)
            iterations += 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            deflated = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi = Zt[i]
                zn = Zt[i + 1].copy()
                Zt[i + 1] = s * zi + c * zn
                Zt[i] = c * zi - s * zn
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0


def _fix_signs(V):
    """Make the largest-magnitude entry of every column positive (first one on ties)."""
    if V.size == 0:
        return V
    idx = np.argmax(np.abs(V), axis=0)
    flip = V[idx, np.arange(V.shape[1])] < 0
    V[:, flip] *= -1.0
    return V


def sym_eig(A):
    """Eigendecomposition of a symmetric matrix.

    Parameters
    ----------
    A : array-like of shape (n, n)
        Only the upper triangle is read.

    Returns
    -------
    eigenvalues : ndarray of shape (n,)
        In decreasing order.
    eigenvectors : ndarray of shape (n, n)
        Orthonormal columns; the largest-magnitude entry of each is positive.

    Raises
    ------
    EigenNonConvergence
        If any eigenvalue needs more than 30 QL iterations.
    """
    A = symmetric(A)
    n = A.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    d, e, Q = _tridiagonalize(A)
    Zt = np.ascontiguousarray(Q.T)
    _tridiagonal_ql(d, e, Zt)
    # stable sort keeps the solver's order among ties
    order = np.argsort(-d, kind="stable")
    eigenvalues = d[order]
    eigenvectors = np.ascontiguousarray(Zt[order].T)
    return eigenvalues, _fix_signs(eigenvectors)


def solve_generalized_eig(M, P):
    """Solve ``M v = lambda P v`` for symmetric ``M`` and SPD ``P``.

    Reduces to the standard problem ``C = L^-1 M L^-T`` with ``P = L L^T``,
    solves it with :func:`sym_eig`, and maps eigenvectors back with
    ``V = L^-T Q``. The returned eigenvectors are P-orthonormal.

    Raises
    ------
    NotPositiveDefinite
        If ``P`` is not numerically positive definite.
    EigenNonConvergence
        Propagated from :func:`sym_eig`.
    """
    M = symmetric(M)
    P = symmetric(P)
    if M.shape != P.shape:
        raise ValueError(f"shape mismatch: M {M.shape} vs P {P.shape}")
    L = cholesky(P)
    if M.shape[0] == 0:
        return GeneralizedEigenSolution(np.zeros(0), np.zeros((0, 0)))
    X = solve_triangular(L, M, lower=True)
    C = solve_triangular(L, X.T, lower=True)
    C = 0.5 * (C + C.T)
    eigenvalues, Q = sym_eig(C)
    V = solve_triangular(L, Q, lower=True, trans="T")
    return GeneralizedEigenSolution(eigenvalues, _fix_signs(V))
