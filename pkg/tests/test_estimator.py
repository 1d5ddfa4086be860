import numpy as np
import pytest
from sklearn.base import clone

from aircomp_vfl.data import synthetic_dataset
from aircomp_vfl.estimator import VerticalFLClassifier
from aircomp_vfl.model import LossSpec, train_error_free


def make_xy(seed=0, L=200, d=16, K=4, noise=0.4):
    ds = synthetic_dataset(seed, L, d, K, label_noise=noise)
    return ds.full_matrix(), ds.labels


class TestSklearnSurface:
    def test_get_set_params_roundtrip(self):
        clf = VerticalFLClassifier(n_devices=8, reg_weight=0.2, n_rounds=7)
        params = clf.get_params()
        assert params["n_devices"] == 8
        assert params["reg_weight"] == 0.2
        other = VerticalFLClassifier().set_params(**params)
        assert other.get_params() == params

    def test_clone_preserves_params(self):
        clf = VerticalFLClassifier(n_devices=2, learning_rate=0.05)
        cloned = clone(clf)
        assert cloned.get_params() == clf.get_params()

    def test_fitted_attributes(self):
        X, y = make_xy()
        clf = VerticalFLClassifier(n_devices=4, n_rounds=5).fit(X, y)
        assert clf.coef_.shape == (16,)
        assert clf.loss_curve_.shape == (6,)
        assert clf.classes_.shape == (2,)
        assert clf.n_features_in_ == 16

    def test_device_count_must_divide_features(self):
        X, y = make_xy(d=15, K=3)
        with pytest.raises(ValueError):
            VerticalFLClassifier(n_devices=4).fit(X, y)

    def test_single_class_rejected(self):
        X = np.random.default_rng(0).standard_normal((10, 4))
        with pytest.raises(ValueError):
            VerticalFLClassifier(n_devices=2).fit(X, np.zeros(10))


class TestErrorFreeTraining:
    def test_matches_training_loop_exactly(self):
        ds = synthetic_dataset(3, 150, 12, 3, label_noise=0.5)
        lam, rounds = 0.05, 40
        clf = VerticalFLClassifier(
            n_devices=3, reg_weight=lam, learning_rate=0.2, n_rounds=rounds
        ).fit(ds.full_matrix(), ds.labels)
        spec = LossSpec(reg_weight=lam, learning_rate=0.2)
        model, losses = train_error_free(ds, spec, rounds)
        np.testing.assert_array_equal(clf.loss_curve_, losses)
        np.testing.assert_array_equal(clf.coef_, model.concatenated())

    def test_auto_learning_rate_monotone(self):
        X, y = make_xy(seed=5)
        clf = VerticalFLClassifier(
            n_devices=4, reg_weight=0.05, learning_rate="auto", n_rounds=60
        ).fit(X, y)
        assert np.all(np.diff(clf.loss_curve_) <= 1e-12)
        assert clf.contraction_rate_ < 1.0

    def test_separable_data_high_accuracy(self):
        ds = synthetic_dataset(7, 400, 16, 4, label_noise=0.0)
        X, y = ds.full_matrix(), ds.labels
        clf = VerticalFLClassifier(
            n_devices=4, reg_weight=1e-4, n_rounds=400
        ).fit(X, y)
        assert clf.score(X, y) >= 0.99

    def test_predict_proba_consistent(self):
        X, y = make_xy(seed=8)
        clf = VerticalFLClassifier(n_devices=4, n_rounds=30).fit(X, y)
        proba = clf.predict_proba(X)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)
        labels = clf.classes_[(proba[:, 1] > 0.5).astype(int)]
        np.testing.assert_array_equal(labels, clf.predict(X))

    def test_eval_set_accuracy_curve(self):
        X, y = make_xy(seed=9, L=300)
        clf = VerticalFLClassifier(n_devices=4, n_rounds=20)
        clf.fit(X[:200], y[:200], eval_set=(X[200:], y[200:]))
        assert clf.accuracy_curve_.shape == (21,)
        assert np.all((0 <= clf.accuracy_curve_) & (clf.accuracy_curve_ <= 1))

    def test_gap_curve_zero_without_link(self):
        X, y = make_xy(seed=10)
        clf = VerticalFLClassifier(n_devices=4, n_rounds=10).fit(X, y)
        np.testing.assert_array_equal(clf.gap_curve_, np.zeros(11))


class FakeNoisyLink:
    """Injects known Gaussian perturbations; mimics the simulated link."""

    def __init__(self, sigma_ul, sigma_dl, num_devices, seed=0):
        self.sigma_ul = sigma_ul
        self.sigma_dl = sigma_dl
        self.num_devices = num_devices
        self.rng = np.random.default_rng(seed)

    def run_round(self, t, signals, g_fn):
        agg = signals.sum(axis=1)
        noisy = agg + self.sigma_ul * self.rng.standard_normal(agg.shape)
        G = g_fn(noisy)
        out = np.stack(
            [
                G + self.sigma_dl * self.rng.standard_normal(G.shape)
                for _ in range(self.num_devices)
            ],
            axis=1,
        )
        info = {
            "sigma2_ul_effective": self.sigma_ul**2,
            "sigma2_dl_effective": np.full(self.num_devices, self.sigma_dl**2),
        }
        return out, info


class TestNoisyLinkTraining:
    def test_ledger_records_injected_variances(self):
        X, y = make_xy(seed=11)
        link = FakeNoisyLink(0.3, 0.1, 4)
        clf = VerticalFLClassifier(
            n_devices=4, reg_weight=0.05, n_rounds=12, link=link
        ).fit(X, y)
        assert clf.gap_ledger_.num_rounds == 12
        assert clf.gap_ledger_.sigma2_ul[0] == pytest.approx(0.09)
        assert clf.gap_curve_[-1] > 0

    def test_small_noise_still_learns(self):
        X, y = make_xy(seed=12, L=400)
        link = FakeNoisyLink(0.05, 0.02, 4, seed=3)
        clf = VerticalFLClassifier(
            n_devices=4, reg_weight=0.05, n_rounds=80, link=link
        ).fit(X, y)
        assert clf.loss_curve_[-1] < clf.loss_curve_[0] * 0.8


class TestMulticlass:
    def test_multiclass_error_free_learns(self):
        rng = np.random.default_rng(13)
        L, d, C = 300, 12, 3
        X = rng.standard_normal((L, d))
        W = rng.standard_normal((d, C))
        y = (X @ W).argmax(axis=1)
        clf = VerticalFLClassifier(
            n_devices=3, reg_weight=1e-3, n_rounds=150
        ).fit(X, y)
        assert clf.classes_.shape == (3,)
        assert clf.coef_.shape == (3, 12)
        assert clf.score(X, y) > 0.85
        assert clf.loss_curve_[-1] < clf.loss_curve_[0]

    def test_multiclass_proba_normalized(self):
        rng = np.random.default_rng(14)
        X = rng.standard_normal((60, 8))
        y = rng.integers(0, 4, 60)
        clf = VerticalFLClassifier(n_devices=2, n_rounds=5).fit(X, y)
        proba = clf.predict_proba(X)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-12)
