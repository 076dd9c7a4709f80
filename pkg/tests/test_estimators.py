import numpy as np
import pytest

from eegstream.align import align_batch
from eegstream.estimators import AdaptiveConvNetClassifier, EuclideanAligner
from eegstream.linalg import trial_covariance
from eegstream.trials import Trial


def variance_coded_trials(rng, n, channels=4, samples=64):
    x = np.empty((n, channels, samples))
    y = np.empty(n, dtype=int)
    for i in range(n):
        label = i % 2
        data = rng.standard_normal((channels, samples))
        data[2 * label : 2 * label + 2] *= 3.0
        x[i], y[i] = data, label
    return x, y


class TestEuclideanAligner:
    def test_fit_transform_matches_align_batch(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((12, 4, 32))
        aligner = EuclideanAligner()
        out = aligner.fit(x).transform(x)
        reference = align_batch([Trial(d, index_in_session=i) for i, d in enumerate(x)])
        np.testing.assert_allclose(out, np.stack([t.data for t in reference]), atol=1e-10)

    def test_mean_covariance_identity_after_transform(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((20, 5, 48))
        out = EuclideanAligner().fit_transform(x)
        mean_cov = sum(trial_covariance(d) for d in out) / len(out)
        assert np.linalg.norm(mean_cov - np.eye(5)) < 1e-6

    def test_partial_fit_accumulates(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((10, 3, 40))
        streamed = EuclideanAligner()
        for row in x:
            streamed.partial_fit(row[None])
        batched = EuclideanAligner().fit(x)
        assert streamed.n_seen_ == 10
        np.testing.assert_allclose(streamed.whitener_, batched.whitener_, rtol=1e-12)

    def test_transform_before_fit_rejected(self):
        with pytest.raises(RuntimeError):
            EuclideanAligner().transform(np.zeros((1, 2, 8)))

    def test_get_params_round_trip(self):
        aligner = EuclideanAligner(eps=1e-8)
        assert aligner.get_params() == {"eps": 1e-8}
        aligner.set_params(eps=0.0)
        assert aligner.eps == 0.0


@pytest.fixture(scope="module")
def fitted():
    rng = np.random.default_rng(3)
    x, y = variance_coded_trials(rng, 64)
    clf = AdaptiveConvNetClassifier(
        blocks=(8, 16), kernel_size=5, pool_stride=2, epochs=15, seed=0
    )
    return clf.fit(x, y), x, y


class TestAdaptiveConvNetClassifier:
    def test_fits_and_scores_training_data(self, fitted):
        clf, x, y = fitted
        assert clf.score(x, y) > 0.9
        assert list(clf.classes_) == [0, 1]
        assert len(clf.loss_curve_) > 0

    def test_predict_proba_rows_sum_to_one(self, fitted):
        clf, x, _ = fitted
        probs = clf.predict_proba(x[:8])
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_modes_share_weights(self, fitted):
        clf, x, y = fitted
        rng = np.random.default_rng(4)
        x_new, y_new = variance_coded_trials(rng, 30)
        offline_score = clf.score(x_new, y_new)
        clf.mode = "adaptive"
        adaptive_score = clf.score(x_new, y_new)
        clf.mode = "online"
        online_score = clf.score(x_new, y_new)
        clf.mode = "offline"
        assert 0.0 <= online_score <= 1.0
        assert adaptive_score >= 0.5
        assert offline_score >= 0.5

    def test_label_encoding_is_preserved(self):
        rng = np.random.default_rng(5)
        x, y = variance_coded_trials(rng, 32)
        clf = AdaptiveConvNetClassifier(blocks=(6,), kernel_size=5, epochs=4, seed=1)
        clf.fit(x, y + 5)  # labels {5, 6}
        predictions = clf.predict(x[:10])
        assert set(predictions) <= {5, 6}

    def test_sklearn_clone_compatible(self):
        from sklearn.base import clone

        clf = AdaptiveConvNetClassifier(epochs=1, blocks=(4,))
        cloned = clone(clf)
        assert cloned.get_params() == clf.get_params()

    def test_unfitted_predict_rejected(self):
        with pytest.raises(RuntimeError):
            AdaptiveConvNetClassifier().predict(np.zeros((1, 2, 16)))

    def test_channel_mismatch_rejected(self, fitted):
        clf, _, _ = fitted
        with pytest.raises(ValueError):
            clf.predict(np.zeros((2, 7, 64)))
