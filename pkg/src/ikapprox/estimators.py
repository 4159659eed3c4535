"""scikit-learn compatible estimators.

:class:`IKA` and :class:`Nystrom` are transformers producing the kernel
feature map ``psi``; :class:`GlobalContrastNormalizer`, :class:`PCAWhitening`
and :class:`UnitNormalizer` cover the patch preprocessing. All of them work
inside :class:`sklearn.pipeline.Pipeline` and support ``get_params`` /
``set_params`` / ``clone``.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_matrix, check_positive_int
from .evaluation import DEFAULT_PAIR_COUNT, empirical_error, select_filters, subsample
from .ika import KernelCenteredBasis, fit_ika
from .kernels import Kernel, make_kernel
from .nystrom import fit_nystrom
from .preprocess import (
    GCN_REGULARIZER,
    fit_pca_whitening,
    global_contrast_normalize,
    percentile_sigma2,
    unit_normalize_rows,
)

MAX_SAMPLE_SIZE = 20_000


class _KernelMapBase(TransformerMixin, BaseEstimator):
    """Shared kernel and filter resolution for the two feature-map estimators."""

    def _resolve_kernel(self, X):
        if isinstance(self.kernel, Kernel):
            return self.kernel
        if self.kernel == "gaussian":
            sigma2 = self.sigma2
            if sigma2 is None:
                sigma2 = percentile_sigma2(X, self.percentile, self.sigma2_pairs,
                                           self.random_state)
            return make_kernel("gaussian", sigma2=sigma2)
        if self.kernel == "linear":
            return make_kernel("linear")
        raise ValueError(f"kernel must be 'gaussian', 'linear' or a Kernel, got {self.kernel!r}")

    def _resolve_filters(self, X):
        if isinstance(self.filters, str):
            n = check_positive_int(self.n_filters, "n_filters")
            return select_filters(X, self.filters, n, self.random_state,
                                  kmeans_batch=self.kmeans_batch,
                                  kmeans_iters=self.kmeans_iters)
        return check_matrix(self.filters, "filters", n_features=X.shape[1])

    def _n_components(self, n):
        m = n if self.n_components is None else check_positive_int(self.n_components, "n_components")
        if m > n:
            raise ValueError(f"n_components={m} exceeds the number of filters {n}")
        return m

    def _store(self, fm, kernel, filters):
        self.kernel_ = kernel
        self.filters_ = filters
        self.feature_map_ = fm
        self.eigenvalues_ = fm.eigenvalues
        self.coefficients_ = fm.coefficients
        self.n_components_ = fm.n_components

    def transform(self, X):
        """Apply the fitted feature map.

        Parameters
        ----------
        X : array-like of shape (n_samples, n_features)

        Returns
        -------
        ndarray of shape (n_samples, n_components_)
        """
        check_is_fitted(self, "feature_map_")
        X = check_matrix(X, "X", allow_empty=True, n_features=self.n_features_in_)
        return self.feature_map_.transform(X)

    def score(self, X, y=None):
        """Negative mean squared kernel error on pairs from ``X`` (higher is better)."""
        check_is_fitted(self, "feature_map_")
        est = empirical_error(self.kernel_, self.feature_map_, X, self.score_pairs,
                              self.random_state)
        return -est.mean_sq_error


class IKA(_KernelMapBase):
    """Low-rank kernel feature map from the kernel eigenfunctions projected on a basis.

    The basis is kernel-centered, ``b_j(x) = K(w_j, x)``, over filters drawn
    from the training data. A random subsample of ``sample_size`` rows
    estimates the inner-product and operator matrices; cost is dominated by
    the ``sample_size^2`` Gram matrix.

    Parameters
    ----------
    kernel : {"gaussian", "linear"} or Kernel, default="gaussian"
    sigma2 : float, optional
        Gaussian bandwidth. Defaults to the ``percentile``-th percentile of
        squared pair distances in the training data.
    n_filters : int, default=128
    n_components : int, optional
        Output dimension ``m``; defaults to ``n_filters``.
    filters : {"random", "kmeans"} or array-like of shape (n, d), default="random"
    sample_size : int, optional
        Rows used to estimate the matrices; all rows by default. At most
        20000 (the Gram matrix then takes 3.2 GB).
    percentile, sigma2_pairs : float, int
        Bandwidth rule settings.
    kmeans_batch, kmeans_iters : int
        Mini-batch k-means settings when ``filters="kmeans"``.
    score_pairs : int
        Pair count used by :meth:`score`.
    random_state : int, default=0

    Attributes
    ----------
    feature_map_ : FeatureMap
    kernel_ : Kernel
    filters_ : ndarray of shape (n, d)
    eigenvalues_ : ndarray of shape (m,)
    coefficients_ : ndarray of shape (n, m)
    sample_size_ : int
    n_features_in_ : int

    Examples
    --------
    >>> import numpy as np
    >>> from ikapprox import IKA
    >>> X = np.random.default_rng(0).normal(size=(500, 5))
    >>> ika = IKA(n_filters=20, n_components=10).fit(X)
    >>> ika.transform(X[:3]).shape
    (3, 10)
    """

    def __init__(self, kernel="gaussian", *, sigma2=None, n_filters=128, n_components=None,
                 filters="random", sample_size=None, percentile=10.0, sigma2_pairs=100_000,
                 kmeans_batch=1000, kmeans_iters=100, score_pairs=DEFAULT_PAIR_COUNT,
                 random_state=0):
        self.kernel = kernel
        self.sigma2 = sigma2
        self.n_filters = n_filters
        self.n_components = n_components
        self.filters = filters
        self.sample_size = sample_size
        self.percentile = percentile
        self.sigma2_pairs = sigma2_pairs
        self.kmeans_batch = kmeans_batch
        self.kmeans_iters = kmeans_iters
        self.score_pairs = score_pairs
        self.random_state = random_state

    def fit(self, X, y=None):
        """Fit the feature map on ``X``; ``y`` is ignored."""
        X = check_matrix(X, "X")
        self.n_features_in_ = X.shape[1]
        S = X.shape[0] if self.sample_size is None else check_positive_int(self.sample_size, "sample_size")
        if S > MAX_SAMPLE_SIZE:
            raise ValueError(f"sample_size={S} exceeds the cap of {MAX_SAMPLE_SIZE}")
        kernel = self._resolve_kernel(X)
        filters = self._resolve_filters(X)
        m = self._n_components(filters.shape[0])
        sample = X if S == X.shape[0] else subsample(X, S, self.random_state)
        fm = fit_ika(kernel, sample, KernelCenteredBasis(kernel, filters), m)
        self.sample_size_ = S
        self._store(fm, kernel, filters)
        return self


class Nystrom(_KernelMapBase):
    """Nystrom feature map over landmark filters.

    Only the filters are used at fit time; the rest of ``X`` matters only
    for choosing filters and the default bandwidth.

    Parameters
    ----------
    Same as :class:`IKA` minus ``sample_size``.
    """

    def __init__(self, kernel="gaussian", *, sigma2=None, n_filters=128, n_components=None,
                 filters="random", percentile=10.0, sigma2_pairs=100_000, kmeans_batch=1000,
                 kmeans_iters=100, score_pairs=DEFAULT_PAIR_COUNT, random_state=0):
        self.kernel = kernel
        self.sigma2 = sigma2
        self.n_filters = n_filters
        self.n_components = n_components
        self.filters = filters
        self.percentile = percentile
        self.sigma2_pairs = sigma2_pairs
        self.kmeans_batch = kmeans_batch
        self.kmeans_iters = kmeans_iters
        self.score_pairs = score_pairs
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_matrix(X, "X")
        self.n_features_in_ = X.shape[1]
        kernel = self._resolve_kernel(X)
        filters = self._resolve_filters(X)
        fm = fit_nystrom(kernel, filters, self._n_components(filters.shape[0]))
        self._store(fm, kernel, filters)
        return self


class GlobalContrastNormalizer(TransformerMixin, BaseEstimator):
    """Per-sample ``(x - mean) / sqrt(var + regularizer)``.

    Each entry along the first axis (an image of any shape, or a row) is
    normalized on its own; nothing is learned.
    """

    def __init__(self, regularizer=GCN_REGULARIZER):
        self.regularizer = regularizer

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        return np.stack([global_contrast_normalize(x, self.regularizer) for x in X]) \
            if len(X) else X.copy()

    def __sklearn_is_fitted__(self):
        return True


class PCAWhitening(TransformerMixin, BaseEstimator):
    """PCA whitening: rotate onto the principal axes and scale to unit variance.

    Parameters
    ----------
    epsilon : float, default=1e-5
        Added to every covariance eigenvalue.
    relative_epsilon : bool, default=True
        Interpret ``epsilon`` as a fraction of the mean eigenvalue.

    Attributes
    ----------
    mean_, projection_, eigenvalues_ : ndarray
    epsilon_ : float
        The absolute regularizer actually used.
    """

    def __init__(self, epsilon=1e-5, relative_epsilon=True):
        self.epsilon = epsilon
        self.relative_epsilon = relative_epsilon

    def fit(self, X, y=None):
        X = check_matrix(X, "X")
        self.n_features_in_ = X.shape[1]
        eps = float(self.epsilon)
        if self.relative_epsilon:
            Xc = X - X.mean(axis=0)
            mean_eig = float(np.einsum("ij,ij->", Xc, Xc)) / (X.shape[0] * X.shape[1])
            # all-constant data has no scale to be relative to
            if mean_eig > 0:
                eps *= mean_eig
        self.transform_ = fit_pca_whitening(X, eps)
        self.mean_ = self.transform_.mean
        self.projection_ = self.transform_.projection
        self.eigenvalues_ = self.transform_.eigenvalues
        self.epsilon_ = eps
        return self

    def transform(self, X):
        check_is_fitted(self, "transform_")
        return self.transform_.apply(X)


class UnitNormalizer(TransformerMixin, BaseEstimator):
    """Scale rows to unit length; rows with norm below 1e-12 stay zero.

    ``zero_rows_`` holds the zero-row count of the last :meth:`transform`.
    """

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        out, self.zero_rows_ = unit_normalize_rows(X)
        return out

    def __sklearn_is_fitted__(self):
        return True
