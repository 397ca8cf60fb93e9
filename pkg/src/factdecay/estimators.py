"""Scikit-learn style estimators over the filtering pipeline.

X is always an integer array of shape (n, 4): head id, relation id,
tail id, day index.  ``OutdatedFactFilter.fit`` learns per-class
half-lives (training the activity classifier unless labels are supplied
or derived directly from update statistics); ``transform`` drops the rows
whose decayed validity falls below the threshold.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .attention import AttentionConfig
from .dataset import Dataset, FactKey, dataset_from_arrays
from .encoder import EncoderConfig, LABEL_INACTIVE, derive_labels
from .halflife import keep_mask, score_dataset
from .training import (
    FilterSettings,
    TrainConfig,
    forward_model,
    pipeline_run,
    train,
)
from .validation import check_binary_labels, check_quad_array


def _key_labels_from_rows(quads: np.ndarray, y: np.ndarray) -> dict[FactKey, int]:
    """Collapse per-row labels to per-key labels, rejecting contradictions."""
    labels: dict[FactKey, int] = {}
    for (h, r), label in zip(quads[:, :2].tolist(), y.tolist()):
        key = FactKey(h, r)
        if key in labels and labels[key] != label:
            raise ValueError(
                f"conflicting labels for fact key {key}: all rows of one "
                "(head, relation) pair must share a class"
            )
        labels[key] = int(label)
    return labels


class OutdatedFactFilter(BaseEstimator, TransformerMixin):
    """Drops records whose decay validity falls strictly below ``theta``.

    Passing per-row activity labels ``y`` to ``fit`` bypasses both the
    label policy and the classifier (oracle classes).  After fitting,
    ``transform`` filters any quadruple array against the learned
    half-lives; keys unseen at fit time default to the inactive class.
    """

    def __init__(
        self,
        theta: float = 0.5,
        labels: str = "classifier",
        label_policy: str = "median-split",
        label_threshold: Optional[float] = None,
        label_quantile: Optional[float] = None,
        zero_superseded: bool = False,
        missing_interval: str = "exclude",
        alpha: float = 0.5,
        epochs: int = 200,
        learning_rate: float = 1e-3,
        optimizer: str = "adam",
        batch_size: Optional[int] = None,
        patience: Optional[int] = None,
        schedule: str = "joint",
        entity_dim: int = 32,
        relation_dim: int = 32,
        heads: int = 2,
        leaky_slope: float = 0.2,
        margin: float = 1.0,
        invert_margin: bool = False,
        negatives_per_positive: int = 1,
        encoder_dim: int = 16,
        encoder_layers: int = 2,
        concat_projected: bool = True,
        t_current: Optional[int] = None,
        seed: int = 0,
    ):
        self.theta = theta
        self.labels = labels
        self.label_policy = label_policy
        self.label_threshold = label_threshold
        self.label_quantile = label_quantile
        self.zero_superseded = zero_superseded
        self.missing_interval = missing_interval
        self.alpha = alpha
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.batch_size = batch_size
        self.patience = patience
        self.schedule = schedule
        self.entity_dim = entity_dim
        self.relation_dim = relation_dim
        self.heads = heads
        self.leaky_slope = leaky_slope
        self.margin = margin
        self.invert_margin = invert_margin
        self.negatives_per_positive = negatives_per_positive
        self.encoder_dim = encoder_dim
        self.encoder_layers = encoder_layers
        self.concat_projected = concat_projected
        self.t_current = t_current
        self.seed = seed

    def _configs(self):
        att = AttentionConfig(
            entity_dim=self.entity_dim,
            relation_dim=self.relation_dim,
            heads=self.heads,
            leaky_slope=self.leaky_slope,
            margin=self.margin,
            negatives_per_positive=self.negatives_per_positive,
            invert_margin=self.invert_margin,
        )
        enc = EncoderConfig(
            out_dim=self.encoder_dim,
            layers=self.encoder_layers,
            concat_projected=self.concat_projected,
            leaky_slope=self.leaky_slope,
        )
        tr = TrainConfig(
            alpha=self.alpha,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            optimizer=self.optimizer,
            seed=self.seed,
            batch_size=self.batch_size,
            patience=self.patience,
            schedule=self.schedule,
        )
        settings = FilterSettings(
            theta=self.theta,
            labels=self.labels,
            label_policy=self.label_policy,
            label_threshold=self.label_threshold,
            label_quantile=self.label_quantile,
            zero_superseded=self.zero_superseded,
            missing_interval=self.missing_interval,
        )
        return att, enc, tr, settings

    def fit(self, X, y=None):
        X = check_quad_array(X)
        dataset = dataset_from_arrays(X, t_current=self.t_current)
        att, enc, tr, settings = self._configs()
        class_override = None
        if y is not None:
            y = check_binary_labels(y, X.shape[0])
            class_override = _key_labels_from_rows(X, y)
            settings.labels = "oracle"
        result = pipeline_run(
            dataset, att, enc, tr, settings, class_override=class_override
        )
        self.half_lives_ = result.half_lives
        self.half_life_active_ = float(result.half_lives.active)
        self.half_life_inactive_ = float(result.half_lives.inactive)
        self.key_classes_ = result.key_classes
        self.report_ = result.report
        self.keep_mask_ = result.keep
        self.params_ = result.params
        self.train_log_ = result.train_log
        self.t_current_ = dataset.t_current
        self.n_features_in_ = 4
        return self

    def _check_fitted(self):
        if not hasattr(self, "half_lives_"):
            raise NotFittedError("OutdatedFactFilter has not been fitted")

    def _score(self, X):
        self._check_fitted()
        X = check_quad_array(X)
        dataset = dataset_from_arrays(X, t_current=max(self.t_current_, int(X[:, 3].max())))
        classes = {
            key: self.key_classes_.get(key, LABEL_INACTIVE)
            for key in dataset.timelines
        }
        scores = score_dataset(
            dataset, classes, self.half_lives_, zero_superseded=self.zero_superseded
        )
        return scores, keep_mask(scores, self.theta)

    def transform(self, X):
        """Rows of X whose validity is at or above the threshold."""
        X = check_quad_array(X)
        _, keep = self._score(X)
        return X[keep]

    def predict(self, X):
        """1 for outdated rows (would be dropped), 0 for kept rows."""
        _, keep = self._score(X)
        return (~keep).astype(np.int64)

    def score_samples(self, X):
        """Decay validity per row, in (0, 1] (0 for zeroed superseded rows)."""
        scores, _ = self._score(X)
        return scores.scores


class FactActivityClassifier(BaseEstimator, ClassifierMixin):
    """Joint-loss trained classifier of fact activity (0 active, 1 inactive).

    Without ``y``, training targets come from the update-interval label
    policy.  ``predict_proba`` scores arbitrary quadruples of the fitted
    vocabulary.
    """

    def __init__(
        self,
        label_policy: str = "median-split",
        label_threshold: Optional[float] = None,
        label_quantile: Optional[float] = None,
        alpha: float = 0.5,
        epochs: int = 200,
        learning_rate: float = 1e-3,
        optimizer: str = "adam",
        batch_size: Optional[int] = None,
        patience: Optional[int] = None,
        schedule: str = "joint",
        entity_dim: int = 32,
        relation_dim: int = 32,
        heads: int = 2,
        leaky_slope: float = 0.2,
        margin: float = 1.0,
        invert_margin: bool = False,
        negatives_per_positive: int = 1,
        encoder_dim: int = 16,
        encoder_layers: int = 2,
        concat_projected: bool = True,
        t_current: Optional[int] = None,
        seed: int = 0,
    ):
        self.label_policy = label_policy
        self.label_threshold = label_threshold
        self.label_quantile = label_quantile
        self.alpha = alpha
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.batch_size = batch_size
        self.patience = patience
        self.schedule = schedule
        self.entity_dim = entity_dim
        self.relation_dim = relation_dim
        self.heads = heads
        self.leaky_slope = leaky_slope
        self.margin = margin
        self.invert_margin = invert_margin
        self.negatives_per_positive = negatives_per_positive
        self.encoder_dim = encoder_dim
        self.encoder_layers = encoder_layers
        self.concat_projected = concat_projected
        self.t_current = t_current
        self.seed = seed

    def _configs(self):
        att = AttentionConfig(
            entity_dim=self.entity_dim,
            relation_dim=self.relation_dim,
            heads=self.heads,
            leaky_slope=self.leaky_slope,
            margin=self.margin,
            negatives_per_positive=self.negatives_per_positive,
            invert_margin=self.invert_margin,
        )
        enc = EncoderConfig(
            out_dim=self.encoder_dim,
            layers=self.encoder_layers,
            concat_projected=self.concat_projected,
            leaky_slope=self.leaky_slope,
        )
        tr = TrainConfig(
            alpha=self.alpha,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            optimizer=self.optimizer,
            seed=self.seed,
            batch_size=self.batch_size,
            patience=self.patience,
            schedule=self.schedule,
        )
        return att, enc, tr

    def fit(self, X, y=None):
        X = check_quad_array(X)
        dataset = dataset_from_arrays(X, t_current=self.t_current)
        att, enc, tr = self._configs()
        if y is not None:
            y = check_binary_labels(y, X.shape[0])
            key_labels = _key_labels_from_rows(X, y)
        else:
            key_labels = derive_labels(
                dataset.timelines,
                policy=self.label_policy,
                threshold=self.label_threshold,
                quantile=self.label_quantile,
            )
        result = train(dataset, key_labels, att, enc, tr)
        self.params_ = result.params
        self.train_log_ = result.log
        self.classes_ = np.array([0, 1], dtype=np.int64)
        self.t_current_ = dataset.t_current
        self.n_features_in_ = 4
        return self

    def predict_proba(self, X):
        if not hasattr(self, "params_"):
            raise NotFittedError("FactActivityClassifier has not been fitted")
        X = check_quad_array(X)
        att, enc, _ = self._configs()
        t_now = max(self.t_current_, int(X[:, 3].max()))
        fwd = forward_model(X, t_now, self.params_, att, enc)
        p_inactive = fwd.probs_np
        return np.column_stack([1.0 - p_inactive, p_inactive])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)
