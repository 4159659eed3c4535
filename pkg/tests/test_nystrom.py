import warnings

import numpy as np
import pytest

from ikapprox.evaluation import empirical_error
from ikapprox.exceptions import DegenerateLandmarks
from ikapprox.ika import KernelCenteredBasis
from ikapprox.kernels import GaussianKernel, build_gram
from ikapprox.nystrom import fit_nystrom

from conftest import finite_rank_kernel


def test_single_landmark():
    k = GaussianKernel(1.0)
    w = np.array([[0.3, -0.2]])
    fm = fit_nystrom(k, w, 1)
    np.testing.assert_allclose(fm.transform(w), [[1.0]], rtol=1e-15)
    x = np.array([[1.0, 1.0]])
    np.testing.assert_allclose(fm.transform(x)[0, 0], k(x[0], w[0]), rtol=1e-15)


def test_exact_on_landmarks(rng):
    k = GaussianKernel(2.0)
    W = rng.standard_normal((10, 3))
    fm = fit_nystrom(k, W, 10)
    psi = fm.transform(W)
    np.testing.assert_allclose(psi @ psi.T, build_gram(k, W), atol=1e-10)


def test_structure(rng):
    k = GaussianKernel(1.0)
    W = rng.standard_normal((6, 2))
    fm = fit_nystrom(k, W, 4)
    assert isinstance(fm.basis, KernelCenteredBasis)
    np.testing.assert_array_equal(fm.basis.filters, W)
    assert fm.n_components == 4
    assert np.all(np.diff(fm.eigenvalues) <= 0) and np.all(fm.eigenvalues > 0)


@pytest.mark.parametrize("r", [1, 2, 3])
def test_exact_recovery_finite_rank(rng, r):
    k = finite_rank_kernel(rng, 5, r)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fm = fit_nystrom(k, rng.standard_normal((8, 5)), r)
    assert fm.n_components == r
    assert empirical_error(k, fm, rng.standard_normal((100, 5)), None).mean_sq_error <= 1e-10


def test_rank_deficient_drops_components(rng):
    k = finite_rank_kernel(rng, 5, 2)
    with pytest.warns(RuntimeWarning, match="numerical rank 2"):
        fm = fit_nystrom(k, rng.standard_normal((8, 5)), 8)
    assert fm.n_components == 2


def test_duplicate_landmarks(rng):
    k = GaussianKernel(1.0)
    W = rng.standard_normal((4, 2))
    with pytest.warns(RuntimeWarning):
        fm = fit_nystrom(k, np.vstack([W, W[:1]]), 5)
    assert fm.n_components == 4
    psi = fm.transform(W)
    np.testing.assert_allclose(psi @ psi.T, build_gram(k, W), atol=1e-8)


def test_degenerate():
    k = GaussianKernel(1e-3)
    # landmarks far from each other: W == I, fine
    fit_nystrom(k, np.array([[0.0], [10.0]]), 2)
    from ikapprox.kernels import LinearKernel

    with pytest.raises(DegenerateLandmarks):
        fit_nystrom(LinearKernel(), np.zeros((3, 2)), 1)


def test_permutation_invariance(rng):
    k = GaussianKernel(1.5)
    W = rng.standard_normal((12, 3))
    X, Y = rng.standard_normal((20, 3)), rng.standard_normal((20, 3))
    a = fit_nystrom(k, W, 12).approximate_kernel(X, Y)
    b = fit_nystrom(k, W[rng.permutation(12)], 12).approximate_kernel(X, Y)
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_m_bounds(rng):
    with pytest.raises(ValueError):
        fit_nystrom(GaussianKernel(1.0), rng.standard_normal((3, 2)), 4)
