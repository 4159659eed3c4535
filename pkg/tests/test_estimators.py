import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from ikapprox import (
    IKA,
    GlobalContrastNormalizer,
    Nystrom,
    PCAWhitening,
    UnitNormalizer,
)
from ikapprox.evaluation import empirical_error, select_filters, subsample
from ikapprox.ika import KernelCenteredBasis, fit_ika
from ikapprox.kernels import GaussianKernel, LinearKernel
from ikapprox.nystrom import fit_nystrom
from ikapprox.preprocess import fit_pca_whitening, global_contrast_normalize, percentile_sigma2


@pytest.fixture
def X(rng):
    return rng.standard_normal((300, 4))


class TestIKA:
    def test_matches_functional_api(self, X):
        est = IKA(n_filters=10, n_components=6, sample_size=200, random_state=3).fit(X)
        sigma2 = percentile_sigma2(X, 10.0, 100_000, 3)
        kernel = GaussianKernel(sigma2)
        W = select_filters(X, "random", 10, 3)
        fm = fit_ika(kernel, subsample(X, 200, 3), KernelCenteredBasis(kernel, W), 6)
        assert est.kernel_ == kernel
        np.testing.assert_array_equal(est.filters_, W)
        np.testing.assert_array_equal(est.transform(X), fm.transform(X))
        assert est.sample_size_ == 200
        assert est.n_features_in_ == 4
        assert est.coefficients_.shape == (10, 6)

    def test_get_params_and_clone(self):
        est = IKA(sigma2=2.0, n_filters=5, random_state=7)
        params = est.get_params()
        assert params["sigma2"] == 2.0 and params["n_filters"] == 5 and params["random_state"] == 7
        twin = clone(est)
        assert twin.get_params() == params
        assert not hasattr(twin, "feature_map_")

    def test_set_params(self, X):
        est = IKA(n_filters=5).set_params(n_components=2, sigma2=1.0)
        assert est.fit(X).transform(X).shape == (300, 2)

    def test_kernel_instance_and_given_filters(self, X):
        W = X[:4]
        est = IKA(kernel=LinearKernel(), filters=W, n_components=4).fit(X)
        assert isinstance(est.kernel_, LinearKernel)
        np.testing.assert_array_equal(est.filters_, W)

    def test_not_fitted(self, X):
        with pytest.raises(NotFittedError):
            IKA().transform(X)

    def test_feature_count_checked(self, X):
        est = IKA(n_filters=5, sigma2=1.0).fit(X)
        with pytest.raises(ValueError):
            est.transform(X[:, :3])

    @pytest.mark.parametrize("kwargs", [
        {"n_components": 9, "n_filters": 5},
        {"sample_size": 20_001},
        {"kernel": "polynomial"},
        {"filters": "grid"},
    ])
    def test_bad_params(self, X, kwargs):
        with pytest.raises(ValueError):
            IKA(sigma2=1.0, **{"n_filters": 5, **kwargs}).fit(X)

    def test_score_is_negative_error(self, X, rng):
        est = IKA(n_filters=8, sigma2=3.0, score_pairs=5000, random_state=1).fit(X)
        test = rng.standard_normal((100, 4))
        ref = empirical_error(est.kernel_, est.feature_map_, test, 5000, 1)
        assert est.score(test) == -ref.mean_sq_error

    def test_deterministic(self, X):
        a = IKA(n_filters=6, random_state=2).fit(X).transform(X)
        b = IKA(n_filters=6, random_state=2).fit(X).transform(X)
        assert a.tobytes() == b.tobytes()


class TestNystrom:
    def test_matches_functional_api(self, X):
        est = Nystrom(n_filters=7, n_components=5, sigma2=2.0, random_state=4).fit(X)
        kernel = GaussianKernel(2.0)
        fm = fit_nystrom(kernel, select_filters(X, "random", 7, 4), 5)
        np.testing.assert_array_equal(est.transform(X), fm.transform(X))

    def test_kmeans_filters_are_unit_rows(self, X):
        est = Nystrom(n_filters=4, filters="kmeans", kmeans_iters=5, kmeans_batch=50).fit(X)
        np.testing.assert_allclose(np.linalg.norm(est.filters_, axis=1), 1.0, atol=1e-12)

    def test_no_sample_size_param(self):
        assert "sample_size" not in Nystrom().get_params()


class TestPreprocessingEstimators:
    def test_gcn_matches_function(self, rng):
        images = rng.uniform(0, 255, size=(3, 5, 5, 3))
        out = GlobalContrastNormalizer().fit_transform(images)
        for img, o in zip(images, out):
            np.testing.assert_array_equal(o, global_contrast_normalize(img))

    def test_gcn_empty(self):
        assert GlobalContrastNormalizer().transform(np.zeros((0, 3))).shape == (0, 3)

    def test_whitening_relative_epsilon(self, rng):
        P = rng.standard_normal((500, 3)) * [1.0, 2.0, 3.0]
        est = PCAWhitening(epsilon=1e-3).fit(P)
        C = np.cov(P - P.mean(axis=0), rowvar=False, bias=True)
        assert est.epsilon_ == pytest.approx(1e-3 * np.trace(C) / 3, rel=1e-12)
        ref = fit_pca_whitening(P, est.epsilon_)
        np.testing.assert_array_equal(est.transform(P), ref.apply(P))

    def test_whitening_absolute_epsilon(self, rng):
        P = rng.standard_normal((50, 2))
        assert PCAWhitening(epsilon=0.5, relative_epsilon=False).fit(P).epsilon_ == 0.5

    def test_unit_normalizer(self):
        est = UnitNormalizer()
        out = est.fit_transform(np.array([[3.0, 4.0], [0.0, 0.0]]))
        np.testing.assert_allclose(out, [[0.6, 0.8], [0.0, 0.0]])
        assert est.zero_rows_ == 1

    def test_pipeline(self, rng):
        P = rng.standard_normal((400, 6))
        pipe = make_pipeline(PCAWhitening(), UnitNormalizer(),
                             IKA(n_filters=10, n_components=5, random_state=0))
        Z = pipe.fit(P).transform(P)
        assert Z.shape == (400, 5)
        assert np.all(np.isfinite(Z))
        assert clone(pipe).get_params()["ika__n_filters"] == 10
