"""Nystrom baseline.

Builds ``psi(x)_i = lambda_i^{-1/2} sum_j U[j, i] K(w_j, x)`` from the
eigendecomposition ``W = U diag(lambda) U^T`` of the landmark Gram matrix,
expressed as a :class:`~ikapprox.ika.FeatureMap` over the kernel-centered
basis so both methods share one evaluation path.
"""

import warnings

import numpy as np

from ._validation import check_matrix, check_positive_int
from .exceptions import DegenerateLandmarks
from .ika import FeatureMap, KernelCenteredBasis
from .linalg import sym_eig

_EPS = np.finfo(np.float64).eps


def fit_nystrom(kernel, landmarks, m):
    """Fit a rank-``m`` Nystrom feature map.

    Eigenpairs of ``W`` with ``lambda <= n * eps * lambda_1`` are dropped
    before truncating to ``m``, so the output can have fewer than ``m``
    components when ``W`` is rank deficient.

    Raises
    ------
    DegenerateLandmarks
        If no eigenvalue survives the drop threshold.
    """
    landmarks = check_matrix(landmarks, "landmarks")
    n = landmarks.shape[0]
    m = check_positive_int(m, "m")
    if m > n:
        raise ValueError(f"m={m} exceeds the number of landmarks n={n}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        basis = KernelCenteredBasis(kernel, landmarks)
    W = kernel.gram(landmarks)
    lam, U = sym_eig(W)
    if lam[0] <= 0:
        raise DegenerateLandmarks("landmark Gram matrix has no positive eigenvalue")
    keep = int(np.count_nonzero(lam > n * _EPS * lam[0]))
    if keep < m:
        warnings.warn(
            f"landmark Gram matrix has numerical rank {keep}; returning {keep} < m={m} components",
            RuntimeWarning,
            stacklevel=2,
        )
    k = min(keep, m)
    lam = lam[:k]
    return FeatureMap(basis, lam, U[:, :k] / lam, kernel)
