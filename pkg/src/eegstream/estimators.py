"""Scikit-learn style estimators over the alignment and classification engine.

These wrappers make the pieces compose with sklearn pipelines and model
selection (``get_params``/``set_params`` come from ``BaseEstimator``). They
treat the data they are given as one recording domain; multi-subject
workflows with per-session alignment live in :mod:`eegstream.harness`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from .adapt import AdaptPolicy, classify_next, classify_offline, start_session
from .align import AlignmentState
from .net import BN_STORED, BlockSpec, NetworkSpec, forward
from .train import TrainConfig, train
from .trials import Trial, TrialSet
from .validation import check_labels, check_trial_array


class EuclideanAligner(BaseEstimator, TransformerMixin):
    """Whitens trials by the inverse square root of their mean covariance.

    ``fit`` estimates the reference covariance over the given trials;
    ``partial_fit`` accumulates it incrementally as trials stream in.
    """

    def __init__(self, eps=None):
        self.eps = eps

    def fit(self, X, y=None):
        self._state = AlignmentState(eps=self.eps)
        return self.partial_fit(X)

    def partial_fit(self, X, y=None):
        if not hasattr(self, "_state"):
            self._state = AlignmentState(eps=self.eps)
        x = check_trial_array(X)
        for data in x:
            self._state.accumulate(Trial(data))
        self.n_seen_ = self._state.n
        self.whitener_ = self._state.whitener()
        return self

    def transform(self, X):
        if not hasattr(self, "_state"):
            raise RuntimeError("EuclideanAligner must be fitted before transform")
        x = check_trial_array(X, channels=self.whitener_.shape[0])
        return np.einsum("ij,njt->nit", self.whitener_, x)


class AdaptiveConvNetClassifier(BaseEstimator, ClassifierMixin):
    """Small 1-D conv backbone with statistic-adaptive inference.

    ``fit`` aligns the training trials as one group, trains the backbone and
    freezes it, also keeping the training-data whitener for strict online
    prediction. ``predict``/``predict_proba`` honor ``mode``:

    * ``"offline"``  - statistics over the whole given set;
    * ``"online"``   - one trial at a time, only frozen statistics;
    * ``"adaptive"`` - one trial at a time, statistics over the trials seen
      so far (rows are processed in the given order).
    """

    def __init__(
        self,
        blocks=(16, 32, 64),
        kernel_size=7,
        pool_stride=2,
        bn_eps=1e-5,
        learning_rate=1e-2,
        momentum=0.9,
        epochs=30,
        batch_size=32,
        bn_momentum=0.1,
        seed=0,
        mode="offline",
        eps_align=None,
        use_soft_kmeans=False,
        soft_kmeans_beta=5.0,
        soft_kmeans_iters=10,
    ):
        self.blocks = blocks
        self.kernel_size = kernel_size
        self.pool_stride = pool_stride
        self.bn_eps = bn_eps
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.epochs = epochs
        self.batch_size = batch_size
        self.bn_momentum = bn_momentum
        self.seed = seed
        self.mode = mode
        self.eps_align = eps_align
        self.use_soft_kmeans = use_soft_kmeans
        self.soft_kmeans_beta = soft_kmeans_beta
        self.soft_kmeans_iters = soft_kmeans_iters

    def _policy(self) -> AdaptPolicy:
        return AdaptPolicy(
            mode=self.mode,
            eps_align=self.eps_align,
            use_soft_kmeans=self.use_soft_kmeans,
            soft_kmeans_beta=self.soft_kmeans_beta,
            soft_kmeans_iters=self.soft_kmeans_iters,
        )

    def fit(self, X, y):
        x = check_trial_array(X)
        labels = check_labels(y, x.shape[0])
        self.classes_ = np.unique(labels)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        index_of = {c: i for i, c in enumerate(self.classes_)}
        encoded = np.array([index_of[c] for c in labels])

        self.spec_ = NetworkSpec(
            in_channels=x.shape[1],
            num_classes=len(self.classes_),
            blocks=tuple(BlockSpec(c, self.kernel_size, self.pool_stride) for c in self.blocks),
            bn_eps=self.bn_eps,
        )
        state = AlignmentState(eps=self.eps_align)
        trials = [
            Trial(data, index_in_session=i, label=int(encoded[i]))
            for i, data in enumerate(x)
        ]
        for t in trials:
            state.accumulate(t)
        whitener = state.whitener()
        aligned = TrialSet(
            trials=[t.with_data(whitener @ t.data) for t in trials],
            num_classes=len(self.classes_),
            aligned=True,
        )
        cfg = TrainConfig(
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            epochs=self.epochs,
            batch_size=self.batch_size,
            bn_momentum=self.bn_momentum,
            seed=self.seed,
        )
        self.loss_curve_: list[float] = []
        weights = train(self.spec_, self.seed, aligned, cfg, loss_log=self.loss_curve_)
        self.weights_ = weights.with_calib_whitener(whitener)
        return self

    def _check_fitted(self):
        if not hasattr(self, "weights_"):
            raise RuntimeError("classifier must be fitted first")

    def predict_proba(self, X):
        self._check_fitted()
        x = check_trial_array(X, channels=self.spec_.in_channels)
        trials = [Trial(data, index_in_session=i) for i, data in enumerate(x)]
        if self.mode == "offline":
            rows = [probs for _, probs in classify_offline(self.spec_, self.weights_, trials)]
        else:
            state = start_session(self.spec_, self.weights_, self._policy())
            rows = [classify_next(state, t)[1] for t in trials]
        return np.stack(rows)

    def predict(self, X):
        self._check_fitted()
        x = check_trial_array(X, channels=self.spec_.in_channels)
        trials = [Trial(data, index_in_session=i) for i, data in enumerate(x)]
        if self.mode == "offline":
            picks = [k for k, _ in classify_offline(self.spec_, self.weights_, trials)]
        else:
            state = start_session(self.spec_, self.weights_, self._policy())
            picks = [classify_next(state, t)[0] for t in trials]
        return self.classes_[np.asarray(picks)]

    def decision_function(self, X):
        self._check_fitted()
        x = check_trial_array(X, channels=self.spec_.in_channels)
        whitener = self.weights_.calib_whitener.astype(np.float64)
        aligned = np.einsum("ij,njt->nit", whitener, x)
        return forward(self.spec_, self.weights_, aligned, BN_STORED).logits
