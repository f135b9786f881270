"""scikit-learn compatible estimators for GRNN, ORARS and sORARS.

All three accept an optional explicit dev set in ``fit``; without one they
hold out ``dev_fraction`` of the rows (seeded by ``random_state``) for
epoch selection.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin, clone
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .core import ZScoreScaler, derive_seed
from .exceptions import ContractViolationError, InvalidConfigError, InvalidDataError
from .nn import (
    LARGE_DATASET,
    Mlp,
    MlpConfig,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train_binary_classifier,
    train_regressor,
)
from .pairing import PairSet, label_range
from .scoring import AnchorScores, score_many
from .sorars import sorars_predict_many


def _split_dev(X, y, X_dev, y_dev, dev_fraction, seed):
    if X_dev is not None:
        X_dev, y_dev = check_X_y(X_dev, y_dev, y_numeric=True)
        if X_dev.shape[1] != X.shape[1]:
            raise ContractViolationError("dev set feature count differs from training set")
        return X, y, X_dev, y_dev
    if X.shape[0] < 3:
        raise InvalidDataError("need at least 3 rows to hold out a dev set")
    rng = np.random.default_rng(derive_seed(seed, 17))
    perm = rng.permutation(X.shape[0])
    n_dev = min(max(1, int(round(dev_fraction * X.shape[0]))), X.shape[0] - 2)
    dev, tr = perm[:n_dev], np.sort(perm[n_dev:])
    return X[tr], y[tr], X[dev], y[dev]


def _check_features(est, X):
    check_is_fitted(est)
    X = check_array(X, dtype=np.float64)
    if X.shape[1] != est.n_features_in_:
        raise ContractViolationError(
            f"model was fit on {est.n_features_in_} features, got {X.shape[1]}"
        )
    return X


class GRNNRegressor(RegressorMixin, BaseEstimator):
    """The 3-block MLP trained directly on scores with MSE.

    Parameters
    ----------
    hidden_units, dropout_rate, learning_rate : network hyperparameters.
    batch_size, epochs : minibatch size and number of passes.
    dev_fraction : share of rows held out when ``fit`` gets no dev set.
    random_state : int seed for initialization, shuffling and dropout.
    """

    def __init__(self, hidden_units=64, dropout_rate=0.0, learning_rate=1e-3, batch_size=32,
                 epochs=256, dev_fraction=0.1, random_state=0):
        self.hidden_units = hidden_units
        self.dropout_rate = dropout_rate
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.dev_fraction = dev_fraction
        self.random_state = random_state

    def fit(self, X, y, X_dev=None, y_dev=None):
        X, y = check_X_y(X, y, y_numeric=True, dtype=np.float64)
        X, y, X_dev, y_dev = _split_dev(X, y, X_dev, y_dev, self.dev_fraction, self.random_state)
        config = MlpConfig(X.shape[1], self.hidden_units, self.dropout_rate, self.learning_rate, "regression")
        train_config = TrainConfig(self.batch_size, self.epochs, self.random_state)
        self.model_, self.history_ = train_regressor(X, y, X_dev, y_dev, config, train_config)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        X = _check_features(self, X)
        return self.model_.predict(X)


class PairwisePreferenceClassifier(ClassifierMixin, BaseEstimator):
    """Binary classifier over concatenated sample pairs ``[x_i, x_j]``.

    ``fit`` takes per-sample features and scores and builds the training
    pairs itself: the self-product of the training rows (diagonal excluded)
    labelled ``y_i > y_j`` and weighted ``|y_i - y_j| / R``.  Dev pairs are
    dev rows against training rows.  ``predict_proba`` expects pair rows of
    width ``2 * n_features``.

    ``batch_size=None`` picks 32 below 8000 samples and 8192 above.
    """

    def __init__(self, hidden_units=64, dropout_rate=0.0, learning_rate=1e-3, batch_size=None,
                 epochs=8, dev_fraction=0.1, label_range=None, random_state=0):
        self.hidden_units = hidden_units
        self.dropout_rate = dropout_rate
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.dev_fraction = dev_fraction
        self.label_range = label_range
        self.random_state = random_state

    def fit(self, X, y, X_dev=None, y_dev=None):
        X, y = check_X_y(X, y, y_numeric=True, dtype=np.float64)
        X, y, X_dev, y_dev = _split_dev(X, y, X_dev, y_dev, self.dev_fraction, self.random_state)
        R = self.label_range if self.label_range is not None else label_range(np.concatenate([y, y_dev]))
        n_tr, n_dev = X.shape[0], X_dev.shape[0]
        X_all = np.concatenate([X, X_dev])
        y_all = np.concatenate([y, y_dev])
        train_idx = np.arange(n_tr)
        dev_idx = np.arange(n_tr, n_tr + n_dev)
        pairs = PairSet(y_all, train_idx, train_idx, R, exclude_self=True)
        dev_pairs = PairSet(y_all, dev_idx, train_idx, R)
        n_samples = n_tr + n_dev
        bs = self.batch_size or (32 if n_samples < LARGE_DATASET else 8192)
        config = MlpConfig(2 * X.shape[1], self.hidden_units, self.dropout_rate, self.learning_rate, "probability")
        self.model_, self.history_ = train_binary_classifier(
            pairs, X_all, dev_pairs, config, TrainConfig(bs, self.epochs, self.random_state)
        )
        self.label_range_ = float(R)
        self.n_pairs_ = len(pairs)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X_pairs):
        check_is_fitted(self)
        X_pairs = check_array(X_pairs, dtype=np.float64)
        if X_pairs.shape[1] != 2 * self.n_features_in_:
            raise ContractViolationError(
                f"pair rows need {2 * self.n_features_in_} columns, got {X_pairs.shape[1]}"
            )
        p = self.model_.predict(X_pairs)
        return np.column_stack([1.0 - p, p])

    def predict(self, X_pairs):
        return (self.predict_proba(X_pairs)[:, 1] > 0.5).astype(int)


def _pair_posteriors(model: Mlp, X_test, X_anchors, chunk_pairs=1 << 18):
    """Posterior matrix (n_test, n_anchors) from a trained pair model, chunked over test rows."""
    n_a = X_anchors.shape[0]
    rows = max(1, chunk_pairs // n_a)
    out = np.empty((X_test.shape[0], n_a))
    for lo in range(0, X_test.shape[0], rows):
        block = X_test[lo:lo + rows]
        left = np.repeat(block, n_a, axis=0)
        right = np.tile(X_anchors, (block.shape[0], 1))
        out[lo:lo + rows] = model.predict(np.concatenate([left, right], axis=1)).reshape(block.shape[0], n_a)
    return out


class ORARSRegressor(RegressorMixin, BaseEstimator):
    """Ordinal regression with anchored reference samples.

    A :class:`PairwisePreferenceClassifier` is fit on the training rows;
    at prediction time each test row is compared with every training row
    (the anchors) and mapped to the anchor score at index
    ``floor(sum of posteriors)``, clamped to the anchor range.
    """

    def __init__(self, hidden_units=64, dropout_rate=0.0, learning_rate=1e-3, batch_size=None,
                 epochs=8, dev_fraction=0.1, label_range=None, legacy_max_index=False, random_state=0):
        self.hidden_units = hidden_units
        self.dropout_rate = dropout_rate
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.dev_fraction = dev_fraction
        self.label_range = label_range
        self.legacy_max_index = legacy_max_index
        self.random_state = random_state

    def fit(self, X, y, X_dev=None, y_dev=None):
        X, y = check_X_y(X, y, y_numeric=True, dtype=np.float64)
        if X_dev is None:
            X, y, X_dev, y_dev = _split_dev(X, y, None, None, self.dev_fraction, self.random_state)
        self.classifier_ = PairwisePreferenceClassifier(
            self.hidden_units, self.dropout_rate, self.learning_rate, self.batch_size,
            self.epochs, self.dev_fraction, self.label_range, self.random_state,
        ).fit(X, y, X_dev, y_dev)
        self.anchors_X_ = X
        self.anchor_scores_ = AnchorScores.from_labels(y)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_posteriors(self, X):
        X = _check_features(self, X)
        return _pair_posteriors(self.classifier_.model_, X, self.anchors_X_)

    def predict(self, X):
        return score_many(self.predict_posteriors(X), self.anchor_scores_, self.legacy_max_index)


class SORARSRegressor(RegressorMixin, BaseEstimator):
    """Rescoring of a regressor's outputs through the anchor score distribution.

    Parameters
    ----------
    regressor : estimator with ``predict`` (default :class:`GRNNRegressor`).
    prefit : if True, ``regressor`` is used as is and only anchors are stored.
    legacy_max_index : reproduce the printed ``max`` index rule (audit only).
    """

    def __init__(self, regressor=None, prefit=False, legacy_max_index=False):
        self.regressor = regressor
        self.prefit = prefit
        self.legacy_max_index = legacy_max_index

    def fit(self, X, y, X_dev=None, y_dev=None):
        X, y = check_X_y(X, y, y_numeric=True, dtype=np.float64)
        if self.prefit:
            if self.regressor is None:
                raise InvalidConfigError("prefit=True needs a regressor")
            self.regressor_ = self.regressor
        else:
            self.regressor_ = clone(self.regressor if self.regressor is not None else GRNNRegressor())
            if X_dev is not None:
                self.regressor_.fit(X, y, X_dev, y_dev)
            else:
                self.regressor_.fit(X, y)
        self.anchors_X_ = X
        self.anchor_labels_ = y
        self.anchor_outputs_ = np.asarray(self.regressor_.predict(X), dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        X = _check_features(self, X)
        return sorars_predict_many(self.regressor_, X, self.anchors_X_, self.anchor_labels_,
                                   self.legacy_max_index, anchor_outputs=self.anchor_outputs_)


def save_estimator(path, estimator, scaler: ZScoreScaler | None = None, metadata: dict | None = None) -> None:
    """Checkpoint a fitted GRNN, ORARS or sORARS (GRNN-backed) estimator plus its scaler."""
    arrays = {}
    if scaler is not None:
        arrays["scaler_mean"] = scaler.mean_
        arrays["scaler_scale"] = scaler.scale_
    meta = dict(metadata or {})
    if isinstance(estimator, GRNNRegressor):
        kind, model = "grnn", estimator.model_
        meta["params"] = estimator.get_params()
    elif isinstance(estimator, ORARSRegressor):
        kind, model = "orars", estimator.classifier_.model_
        meta["params"] = estimator.get_params()
        arrays["anchors_X"] = estimator.anchors_X_
        arrays["anchor_scores"] = estimator.anchor_scores_.sorted_scores
    elif isinstance(estimator, SORARSRegressor) and isinstance(estimator.regressor_, GRNNRegressor):
        kind, model = "sorars", estimator.regressor_.model_
        meta["params"] = {"legacy_max_index": estimator.legacy_max_index,
                          "regressor": estimator.regressor_.get_params()}
        arrays["anchors_X"] = estimator.anchors_X_
        arrays["anchor_labels"] = estimator.anchor_labels_
    else:
        raise InvalidConfigError(f"cannot checkpoint {type(estimator).__name__}")
    meta["kind"] = kind
    save_checkpoint(path, model, arrays, meta)


def load_estimator(path):
    """Inverse of :func:`save_estimator`; returns ``(estimator, scaler_or_None, metadata)``."""
    model, arrays, meta = load_checkpoint(path)
    kind = meta.get("kind")
    n_features = model.config.input_dim
    if kind == "grnn":
        est = GRNNRegressor(**meta["params"])
        est.model_ = model
    elif kind == "orars":
        n_features //= 2
        est = ORARSRegressor(**meta["params"])
        clf = PairwisePreferenceClassifier(**{k: v for k, v in meta["params"].items() if k != "legacy_max_index"})
        clf.model_, clf.classes_, clf.n_features_in_ = model, np.array([0, 1]), n_features
        est.classifier_ = clf
        est.anchors_X_ = arrays["anchors_X"]
        est.anchor_scores_ = AnchorScores(arrays["anchor_scores"])
    elif kind == "sorars":
        reg = GRNNRegressor(**meta["params"]["regressor"])
        reg.model_, reg.n_features_in_ = model, n_features
        est = SORARSRegressor(regressor=reg, prefit=True, legacy_max_index=meta["params"]["legacy_max_index"])
        est.regressor_ = reg
        est.anchors_X_ = arrays["anchors_X"]
        est.anchor_labels_ = arrays["anchor_labels"]
        est.anchor_outputs_ = reg.predict(est.anchors_X_)
    else:
        raise InvalidDataError(f"unknown estimator kind {kind!r} in checkpoint")
    est.n_features_in_ = n_features
    scaler = None
    if "scaler_mean" in arrays:
        scaler = ZScoreScaler()
        scaler.mean_, scaler.scale_ = arrays["scaler_mean"], arrays["scaler_scale"]
        scaler.n_features_in_ = scaler.mean_.shape[0]
    return est, scaler, meta
