import numpy as np
import pytest

from calfwatch import forest, model_io, ridge, rocket
from calfwatch.errors import BadMagic, Truncated, VersionUnsupported


def ridge_model(rng, with_kernelset=False):
    X = rng.normal(size=(40, 6))
    y = rng.choice(["lying", "running", "other"], size=40)
    m = ridge.fit_ridge_cv(X, y)
    if with_kernelset:
        m.kernelset = rocket.sample_kernels(seed=77, num_kernels=25)
    return m, X


def forest_model(rng):
    X = rng.normal(size=(80, 7))
    y = np.where(X[:, 2] > 0, "active", "inactive")
    m = forest.fit_rf(X, y, forest.ForestParams(n_trees=15), seed=5)
    m.feature_subset = tuple(f"f{i}" for i in range(7))
    return m, X


class TestRoundTrip:
    def test_ridge_predictions_identical(self, rng):
        m, X = ridge_model(rng)
        back = model_io.load_model(model_io.save_model(m))
        l0, d0 = ridge.predict_ridge(m, X)
        l1, d1 = ridge.predict_ridge(back, X)
        assert (l0 == l1).all()
        np.testing.assert_array_equal(d0, d1)
        np.testing.assert_array_equal(m.loo_errors, back.loo_errors)

    def test_ridge_with_embedded_kernelset(self, rng):
        m, _ = ridge_model(rng, with_kernelset=True)
        back = model_io.load_model(model_io.save_model(m))
        assert back.kernelset == m.kernelset

    def test_forest_predictions_identical(self, rng):
        m, X = forest_model(rng)
        back = model_io.load_model(model_io.save_model(m))
        l0, f0 = forest.predict_rf(m, X)
        l1, f1 = forest.predict_rf(back, X)
        assert (l0 == l1).all()
        np.testing.assert_array_equal(f0, f1)
        assert back.feature_subset == m.feature_subset
        assert back.params == m.params

    def test_same_seed_forests_serialize_identically(self, rng):
        X = rng.normal(size=(60, 4))
        y = np.where(X[:, 0] > 0, "a", "b")
        m1 = forest.fit_rf(X, y, forest.ForestParams(n_trees=8), seed=3)
        m2 = forest.fit_rf(X, y, forest.ForestParams(n_trees=8), seed=3)
        assert model_io.save_model(m1) == model_io.save_model(m2)

    def test_double_roundtrip_stable_bytes(self, rng):
        m, _ = forest_model(rng)
        blob = model_io.save_model(m)
        assert model_io.save_model(model_io.load_model(blob)) == blob


class TestContainerErrors:
    def test_bad_magic(self, rng):
        m, _ = ridge_model(rng)
        blob = bytearray(model_io.save_model(m))
        blob[0:4] = b"NOPE"
        with pytest.raises(BadMagic):
            model_io.load_model(bytes(blob))

    def test_truncated(self, rng):
        m, _ = forest_model(rng)
        blob = model_io.save_model(m)
        for cut in (3, 6, 20, len(blob) // 2, len(blob) - 1):
            with pytest.raises((Truncated, BadMagic)):
                model_io.load_model(blob[:cut])

    def test_version_unsupported(self, rng):
        m, _ = ridge_model(rng)
        blob = bytearray(model_io.save_model(m))
        blob[4] = 99
        with pytest.raises(VersionUnsupported):
            model_io.load_model(bytes(blob))


class TestKernelSetSection:
    def test_roundtrip_bit_identical(self):
        ks = rocket.sample_kernels(seed=123, num_kernels=50)
        back = model_io.unpack_kernelset(model_io.pack_kernelset(ks))
        assert back == ks

    def test_transform_agrees_after_roundtrip(self, rng):
        from calfwatch.signals import Window
        ks = rocket.sample_kernels(seed=9, num_kernels=20)
        back = model_io.unpack_kernelset(model_io.pack_kernelset(ks))
        w = [Window(start_t=0, values=rng.normal(size=(8, 75)))]
        np.testing.assert_array_equal(rocket.transform(w, ks),
                                      rocket.transform(w, back))

    def test_truncated_kernelset(self):
        ks = rocket.sample_kernels(seed=1, num_kernels=5)
        blob = model_io.pack_kernelset(ks)
        with pytest.raises(Truncated):
            model_io.unpack_kernelset(blob[:30])
