"""End-to-end estimator: ProcessedDocs in, per-topic scores out."""

from __future__ import annotations

import time
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from repotopics.classify import MultinomialNBOVR, WeightedLogisticOVR, classifier_from_state, recommend
from repotopics.features import SourceFeaturizer
from repotopics.textprep import SOURCES


class TopicRecommender(BaseEstimator, ClassifierMixin):
    """TF-IDF features followed by a one-vs-rest topic classifier.

    ``fit(docs, Y)`` takes ProcessedDocs and a multi-hot label matrix whose
    columns follow ``topics``. ``score`` reports LRAP rather than accuracy.
    """

    def __init__(self, kind: str = "logistic", topics: Optional[Sequence[str]] = None,
                 feature_mode: str = "unified", sources: tuple = SOURCES, ngram_range: tuple = (1, 2),
                 max_features: int = 20000, text_max_features: int = 18000, name_max_features: int = 2000,
                 learning_rate: float = 0.1, max_iters: int = 1000, l2: float = 1e-4, tol: float = 1e-6,
                 use_class_weights: Optional[bool] = None, alpha: float = 1.0, n_jobs: Optional[int] = None):
        self.kind = kind
        self.topics = topics
        self.feature_mode = feature_mode
        self.sources = sources
        self.ngram_range = ngram_range
        self.max_features = max_features
        self.text_max_features = text_max_features
        self.name_max_features = name_max_features
        self.learning_rate = learning_rate
        self.max_iters = max_iters
        self.l2 = l2
        self.tol = tol
        self.use_class_weights = use_class_weights
        self.alpha = alpha
        self.n_jobs = n_jobs

    def _make_classifier(self):
        if self.kind == "logistic":
            use = True if self.use_class_weights is None else self.use_class_weights
            return WeightedLogisticOVR(self.learning_rate, self.max_iters, self.l2, self.tol, use, self.n_jobs)
        if self.kind == "mnb":
            use = False if self.use_class_weights is None else self.use_class_weights
            return MultinomialNBOVR(self.alpha, use)
        raise ValueError(f"kind must be 'logistic' or 'mnb', got {self.kind!r}")

    def fit(self, X, y):
        start = time.perf_counter()
        docs = list(X)
        Y = np.asarray(y)
        if Y.ndim != 2:
            raise ValueError("labels must be a 2-D multi-hot matrix")
        topics = tuple(self.topics) if self.topics is not None else tuple(str(i) for i in range(Y.shape[1]))
        if len(topics) != Y.shape[1]:
            raise ValueError(f"{len(topics)} topic names for {Y.shape[1]} label columns")
        clf = self._make_classifier()
        self.featurizer_ = SourceFeaturizer(self.feature_mode, tuple(self.sources), tuple(self.ngram_range),
                                            self.max_features, self.text_max_features, self.name_max_features)
        features = self.featurizer_.fit_transform(docs)
        self.classifier_ = clf.fit(features, Y)
        self.topics_ = topics
        self.classes_ = np.array(topics, dtype=object)
        self.fit_seconds_ = time.perf_counter() - start
        return self

    def transform(self, X):
        check_is_fitted(self, "classifier_")
        return self.featurizer_.transform(list(X))

    def predict_proba(self, X) -> np.ndarray:
        return self.classifier_.predict_proba(self.transform(X))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.uint8)

    def recommend(self, X, n: int = 5) -> list:
        return [recommend(row, n, self.topics_) for row in self.predict_proba(X)]

    def score(self, X, y, sample_weight=None) -> float:
        from repotopics.evaluation import lrap

        return lrap(self.predict_proba(X), y)

    def state_json(self) -> tuple[dict, dict, dict]:
        """(params + topics, featurizer state, classifier state)."""
        check_is_fitted(self, "classifier_")
        params = {k: list(v) if isinstance(v, tuple) else v for k, v in self.get_params().items()}
        params["topics"] = list(self.topics_)
        return params, self.featurizer_.state_json(), self.classifier_.state_json()

    @classmethod
    def from_state_json(cls, params: dict, featurizer: dict, classifier: dict) -> "TopicRecommender":
        params = dict(params)
        for key in ("sources", "ngram_range", "topics"):
            params[key] = tuple(params[key])
        model = cls(**params)
        model.featurizer_ = SourceFeaturizer.from_state_json(featurizer)
        model.classifier_ = classifier_from_state(classifier)
        model.topics_ = tuple(params["topics"])
        model.classes_ = np.array(model.topics_, dtype=object)
        if model.classifier_.n_features_in_ != model.featurizer_.n_features_out_:
            raise ValueError("classifier width does not match the feature space")
        if len(model.classifier_.classes_) != len(model.topics_):
            raise ValueError("classifier topic count does not match the topic list")
        return model
