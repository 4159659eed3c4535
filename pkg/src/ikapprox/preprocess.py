"""Image-patch preprocessing and filter selection.

Pipeline: global contrast normalization per image, random patch sampling,
PCA whitening, unit-length rows. Filters for the kernel-centered basis come
either from random patches or from mini-batch k-means. Variances use the
population (1/N) convention throughout.
"""

import math
from dataclasses import dataclass

import numpy as np
from sklearn.cluster import kmeans_plusplus

from ._validation import check_matrix, check_positive_int
from .linalg import sym_eig
from .rng import stream

GCN_REGULARIZER = 10.0
ZERO_ROW_TOL = 1e-12


def global_contrast_normalize(image, regularizer=GCN_REGULARIZER):
    """``(I - mean(I)) / sqrt(var(I) + regularizer)`` over all pixels and channels."""
    image = np.asarray(image, dtype=np.float64)
    if not np.all(np.isfinite(image)):
        raise ValueError("image contains NaN or infinity")
    centered = image - image.mean()
    # second centering pass absorbs the rounding left by the first
    centered -= centered.mean()
    return centered / math.sqrt(np.mean(centered * centered) + regularizer)


def global_contrast_normalize_images(images, regularizer=GCN_REGULARIZER):
    """Apply :func:`global_contrast_normalize` to each image of a stack."""
    images = np.asarray(images, dtype=np.float64)
    return np.stack([global_contrast_normalize(im, regularizer) for im in images]) \
        if len(images) else images.copy()


def sample_patches(images, patch_size, count, seed):
    """Draw ``count`` patches at uniformly random images and positions.

    Parameters
    ----------
    images : array-like of shape (N, H, W, C)
    patch_size : (int, int)
    count : int
    seed : int

    Returns
    -------
    ndarray of shape (count, h * w * C)
        Each patch flattened row-major, channel last.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4:
        raise ValueError(f"images must have shape (N, H, W, C), got {images.shape}")
    N, H, W, C = images.shape
    h, w = (int(s) for s in patch_size)
    if h < 1 or w < 1 or h > H or w > W:
        raise ValueError(f"patch {h}x{w} does not fit inside {H}x{W} images")
    count = check_positive_int(count, "count", minimum=0)
    d = h * w * C
    if count == 0:
        return np.zeros((0, d))
    if N == 0:
        raise ValueError("cannot sample patches from an empty image set")
    rng = stream(seed, "patch-sampling")
    idx = rng.integers(0, N, size=count)
    top = rng.integers(0, H - h + 1, size=count)
    left = rng.integers(0, W - w + 1, size=count)
    out = np.empty((count, d))
    for r in range(count):
        out[r] = images[idx[r], top[r]:top[r] + h, left[r]:left[r] + w, :].reshape(-1)
    return out


@dataclass(frozen=True)
class WhiteningTransform:
    """``x -> projection @ (x - mean)``; ``projection = (Lambda + eps I)^{-1/2} E^T``."""

    mean: np.ndarray
    projection: np.ndarray
    epsilon: float
    eigenvalues: np.ndarray

    def apply(self, X):
        X = check_matrix(X, "X", allow_empty=True, n_features=self.mean.shape[0])
        return (X - self.mean) @ self.projection.T


def fit_pca_whitening(patches, epsilon):
    """Fit PCA whitening on the rows of ``patches``.

    ``epsilon`` is added to every covariance eigenvalue before the inverse
    square root. With ``epsilon == 0`` a (numerically) zero eigenvalue is an
    error.
    """
    X = check_matrix(patches, "patches")
    if X.shape[0] < 2:
        raise ValueError("PCA whitening needs at least 2 patches")
    epsilon = float(epsilon)
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = (Xc.T @ Xc) / X.shape[0]
    lam, E = sym_eig(cov)
    lam = np.maximum(lam, 0.0)
    floor = X.shape[1] * np.finfo(np.float64).eps * max(lam[0], 0.0)
    if epsilon == 0 and np.any(lam <= floor):
        raise ValueError("covariance is singular; PCA whitening needs epsilon > 0")
    projection = E.T / np.sqrt(lam + epsilon)[:, None]
    return WhiteningTransform(mean, projection, epsilon, lam)


def unit_normalize_rows(X):
    """Scale every row to unit length.

    Returns
    -------
    normalized : ndarray
    zero_rows : int
        Rows with norm below 1e-12, returned as zeros.
    """
    X = check_matrix(X, "X", allow_empty=True)
    norms = np.sqrt(np.einsum("ij,ij->i", X, X))
    zero = norms < ZERO_ROW_TOL
    out = np.zeros_like(X)
    out[~zero] = X[~zero] / norms[~zero, None]
    return out, int(np.count_nonzero(zero))


def _nearest_sq_dist(X, centers):
    # small k and d: the expanded form is fine for assignment
    d2 = (
        np.einsum("ij,ij->i", X, X)[:, None]
        - 2.0 * X @ centers.T
        + np.einsum("ij,ij->i", centers, centers)[None, :]
    )
    labels = np.argmin(d2, axis=1)
    return labels, np.maximum(d2[np.arange(X.shape[0]), labels], 0.0)


def kmeans_objective(X, centers):
    """Mean squared distance from each row of ``X`` to its nearest center."""
    return float(_nearest_sq_dist(X, centers)[1].mean())


def minibatch_kmeans(X, k, batch, iters, seed, *, init_size=None, normalize=True,
                     monitor=None, return_history=False):
    """Mini-batch k-means with k-means++ initialization.

    Each iteration assigns a random batch to its nearest centers and moves
    every center to the running mean of all points it has absorbed (learning
    rate ``1 / count``). Centers that never absorbed a point are re-seeded
    from random data rows at the end.

    Parameters
    ----------
    X : array-like of shape (N, d)
    k, batch, iters : int
    seed : int
    init_size : int, optional
        Subsample size for k-means++; defaults to ``max(3 * k, batch)``.
    normalize : bool
        Return unit-length centers (the filters).
    monitor : array-like, optional
        Held-out rows; with ``return_history`` the objective on them is
        recorded after initialization and every iteration.

    Returns
    -------
    centers : ndarray of shape (k, d)
    history : list of float
        Only if ``return_history``.
    """
    X = check_matrix(X, "X")
    N = X.shape[0]
    k = check_positive_int(k, "k")
    batch = check_positive_int(batch, "batch")
    iters = check_positive_int(iters, "iters", minimum=0)
    if k > N:
        raise ValueError(f"k={k} exceeds the number of rows {N}")
    rng = stream(seed, "kmeans")
    init_size = min(N, init_size or max(3 * k, batch))
    init_idx = np.sort(rng.choice(N, size=init_size, replace=False))
    init_state = int(rng.integers(0, 2**31 - 1))
    centers, _ = kmeans_plusplus(X[init_idx], k, random_state=init_state)
    centers = np.array(centers, dtype=np.float64)
    counts = np.zeros(k)
    history = []
    if monitor is not None:
        monitor = check_matrix(monitor, "monitor", n_features=X.shape[1])
        history.append(kmeans_objective(monitor, centers))
    for _ in range(iters):
        idx = rng.choice(N, size=min(batch, N), replace=False)
        Xb = X[idx]
        labels, _ = _nearest_sq_dist(Xb, centers)
        nb = np.bincount(labels, minlength=k).astype(np.float64)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, Xb)
        hit = nb > 0
        new_counts = counts[hit] + nb[hit]
        centers[hit] += (sums[hit] - nb[hit, None] * centers[hit]) / new_counts[:, None]
        counts[hit] = new_counts
        if monitor is not None:
            history.append(kmeans_objective(monitor, centers))
    empty = np.flatnonzero(counts == 0) if iters else np.zeros(0, dtype=int)
    if empty.size:
        centers[empty] = X[rng.choice(N, size=empty.size, replace=False)]
    if normalize:
        centers, _ = unit_normalize_rows(centers)
    return (centers, history) if return_history else centers


def nearest_rank_percentile(values, q):
    """The ``ceil(q / 100 * N)``-th smallest value (1-based)."""
    values = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if values.size == 0:
        raise ValueError("no values")
    if not 0 < q < 100:
        raise ValueError(f"q must be in (0, 100), got {q}")
    rank = max(1, math.ceil(q * values.size / 100.0))
    return float(values[rank - 1])


def percentile_sigma2(X, q=10.0, pair_count=100_000, seed=0):
    """Gaussian bandwidth as the ``q``-th percentile of squared pair distances.

    Pairs ``i != j`` are drawn uniformly at random; ``pair_count=None`` uses
    every unordered pair instead.
    """
    X = check_matrix(X, "X")
    S = X.shape[0]
    if S < 2:
        raise ValueError("need at least 2 points")
    if pair_count is None:
        i, j = np.triu_indices(S, 1)
    else:
        if pair_count < 1:
            raise ValueError(f"pair_count must be >= 1, got {pair_count}")
        rng = stream(seed, "sigma2-pairs")
        i = rng.integers(0, S, size=int(pair_count))
        j = (i + rng.integers(1, S, size=int(pair_count))) % S
    diff = X[i] - X[j]
    return nearest_rank_percentile(np.einsum("ij,ij->i", diff, diff), q)
