"""One-vs-rest topic classifiers and top-n recommendation."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from joblib import Parallel, delayed
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

logger = logging.getLogger(__name__)


class TrainingDiverged(ArithmeticError):
    def __init__(self, topic: int, iteration: int):
        super().__init__(f"loss became non-finite for topic {topic} at iteration {iteration}; "
                         "try a smaller learning_rate")
        self.topic = topic
        self.iteration = iteration


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    max_iters: int = 1000
    l2: float = 1e-4
    tol: float = 1e-6
    seed: int = 42
    use_class_weights: Optional[bool] = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")
        if self.max_iters < 0 or self.l2 < 0:
            raise ValueError("max_iters and l2 must be >= 0")


def _check_labels(Y, n_rows: int) -> np.ndarray:
    Y = check_array(Y, ensure_2d=True, dtype=None)
    if Y.shape[0] != n_rows:
        raise ValueError(f"features have {n_rows} rows but labels have {Y.shape[0]}")
    if not np.isin(Y, (0, 1)).all():
        raise ValueError("labels must be a 0/1 indicator matrix")
    return Y.astype(np.float64)


def compute_class_weights(labels) -> np.ndarray:
    """Per-topic weight: number of repositories over topic frequency."""
    Y = np.asarray(labels)
    freq = Y.sum(axis=0)
    zero = np.flatnonzero(freq == 0)
    if zero.size:
        raise ValueError(f"topic columns {zero.tolist()} have no positive example; "
                         "run filter_by_support first")
    return Y.shape[0] / freq.astype(np.float64)


def logistic_loss_grad(w: np.ndarray, b: float, X, y: np.ndarray, sample_weight: np.ndarray,
                       l2: float, XT=None) -> tuple[float, np.ndarray, float]:
    """Weighted mean binary cross-entropy plus (l2/2)*||w||^2, and its gradient.

    The bias is not penalized.
    """
    n = X.shape[0]
    z = X @ w + b
    loss = float(np.dot(sample_weight, np.logaddexp(0.0, z) - y * z)) / n + 0.5 * l2 * float(np.dot(w, w))
    r = sample_weight * (expit(z) - y) / n
    grad_w = (XT if XT is not None else X.T) @ r + l2 * w
    return loss, grad_w, float(r.sum())


def _fit_binary(X, XT, y: np.ndarray, pos_weight: float, cfg: TrainConfig, topic: int):
    n_features = X.shape[1]
    w = np.zeros(n_features)
    b = 0.0
    sw = np.where(y == 1.0, pos_weight, 1.0)
    loss, gw, gb = logistic_loss_grad(w, b, X, y, sw, cfg.l2, XT)
    initial = loss
    n_iter = 0
    for it in range(1, cfg.max_iters + 1):
        w_new = w - cfg.learning_rate * gw
        b_new = b - cfg.learning_rate * gb
        with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported just below
            new_loss, new_gw, new_gb = logistic_loss_grad(w_new, b_new, X, y, sw, cfg.l2, XT)
        if not np.isfinite(new_loss):
            raise TrainingDiverged(topic, it)
        if new_loss > loss:
            # overshoot: keep the last iterate so the loss never ends above where it started
            break
        improvement = loss - new_loss
        w, b, loss, gw, gb = w_new, b_new, new_loss, new_gw, new_gb
        n_iter = it
        if improvement < cfg.tol:
            break
    return w, b, initial, loss, n_iter


class WeightedLogisticOVR(BaseEstimator, ClassifierMixin):
    """One binary logistic regression per topic, trained by full-batch gradient descent.

    Positive examples of topic t carry weight ``N / frequency(t)`` when
    ``use_class_weights`` is on; negatives carry weight 1. Training starts
    from zero weights, so it needs no random state.

    Parameters
    ----------
    learning_rate : float
    max_iters : int
    l2 : float
        Ridge penalty on the weights (not the bias).
    tol : float
        Stop once an iteration improves the loss by less than this.
    use_class_weights : bool
    n_jobs : int, optional
        Topics are trained independently; with ``n_jobs`` they run in threads
        and produce the same bytes as sequential training.
    """

    kind = "logistic"

    def __init__(self, learning_rate: float = 0.1, max_iters: int = 1000, l2: float = 1e-4,
                 tol: float = 1e-6, use_class_weights: bool = True, n_jobs: Optional[int] = None):
        self.learning_rate = learning_rate
        self.max_iters = max_iters
        self.l2 = l2
        self.tol = tol
        self.use_class_weights = use_class_weights
        self.n_jobs = n_jobs

    def _config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.max_iters, self.l2, self.tol)

    def fit(self, X, Y, class_weights=None):
        X = check_array(X, accept_sparse="csr", dtype=np.float64)
        Y = _check_labels(Y, X.shape[0])
        cfg = self._config()
        if class_weights is not None:
            weights = np.asarray(class_weights, dtype=np.float64)
        elif self.use_class_weights:
            weights = compute_class_weights(Y)
        else:
            weights = np.ones(Y.shape[1])
        if weights.shape != (Y.shape[1],):
            raise ValueError("class_weights must have one entry per topic")
        XT = X.T.tocsr() if sp.issparse(X) else X.T
        jobs = (delayed(_fit_binary)(X, XT, Y[:, t], float(weights[t]), cfg, t) for t in range(Y.shape[1]))
        results = Parallel(n_jobs=self.n_jobs, prefer="threads")(jobs)
        self.coef_ = np.vstack([r[0] for r in results]) if results else np.zeros((0, X.shape[1]))
        self.intercept_ = np.array([r[1] for r in results], dtype=np.float64)
        self.initial_loss_ = np.array([r[2] for r in results])
        self.final_loss_ = np.array([r[3] for r in results])
        self.n_iter_ = np.array([r[4] for r in results], dtype=np.int64)
        self.class_weight_ = weights
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.arange(Y.shape[1])
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "coef_")
        X = check_array(X, accept_sparse="csr", dtype=np.float64)
        _check_width(X, self.n_features_in_)
        return np.asarray(X @ self.coef_.T) + self.intercept_

    def predict_proba(self, X) -> np.ndarray:
        """Independent per-topic probabilities, shape (n_samples, n_topics)."""
        return expit(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.uint8)

    def state_json(self) -> dict:
        check_is_fitted(self, "coef_")
        return {
            "kind": self.kind,
            "params": self.get_params(),
            "coef": self.coef_.tolist(),
            "intercept": self.intercept_.tolist(),
            "class_weight": self.class_weight_.tolist(),
            "n_features_in": int(self.n_features_in_),
        }

    @classmethod
    def from_state_json(cls, obj: dict) -> "WeightedLogisticOVR":
        model = cls(**obj["params"])
        d = int(obj["n_features_in"])
        model.coef_ = np.array(obj["coef"], dtype=np.float64).reshape(-1, d)
        model.intercept_ = np.array(obj["intercept"], dtype=np.float64)
        model.class_weight_ = np.array(obj["class_weight"], dtype=np.float64)
        model.n_features_in_ = d
        model.classes_ = np.arange(len(model.intercept_))
        if model.coef_.shape[0] != len(model.intercept_):
            raise ValueError("coef and intercept disagree on the number of topics")
        return model


class MultinomialNBOVR(BaseEstimator, ClassifierMixin):
    """One two-class multinomial naive Bayes per topic, Laplace-smoothed.

    Feature values (TF-IDF weights) are used as fractional counts. The topic
    score is the normalized posterior of the positive class.
    """

    kind = "mnb"

    def __init__(self, alpha: float = 1.0, use_class_weights: bool = False):
        self.alpha = alpha
        self.use_class_weights = use_class_weights

    def fit(self, X, Y):
        X = check_array(X, accept_sparse="csr", dtype=np.float64)
        Y = _check_labels(Y, X.shape[0])
        data = X.data if sp.issparse(X) else X
        if data.size and data.min() < 0:
            raise ValueError("multinomial naive Bayes needs non-negative features")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        n, d = X.shape
        weights = compute_class_weights(Y) if self.use_class_weights else np.ones(Y.shape[1])

        pos_counts = np.asarray((sp.csr_matrix(Y.T) @ X).todense()) if sp.issparse(X) else Y.T @ X
        total = np.asarray(X.sum(axis=0)).ravel()
        neg_counts = total[None, :] - pos_counts
        np.maximum(neg_counts, 0.0, out=neg_counts)
        pos_counts = pos_counts * weights[:, None]

        def log_prob(counts):
            smoothed = counts + self.alpha
            return np.log(smoothed) - np.log(smoothed.sum(axis=1, keepdims=True))

        self.feature_log_prob_pos_ = log_prob(pos_counts)
        self.feature_log_prob_neg_ = log_prob(neg_counts)

        n_pos = Y.sum(axis=0) * weights
        n_neg = n - Y.sum(axis=0)
        prior = np.column_stack([n_neg, n_pos]).astype(np.float64)
        degenerate = (prior == 0).any(axis=1)
        if degenerate.any():
            logger.warning("%d topics have a single class in training; smoothing their priors",
                           int(degenerate.sum()))
            prior[degenerate] += self.alpha
        self.class_log_prior_ = np.log(prior) - np.log(prior.sum(axis=1, keepdims=True))
        self.class_weight_ = weights
        self.n_features_in_ = d
        self.classes_ = np.arange(Y.shape[1])
        return self

    def joint_log_likelihood(self, X) -> tuple[np.ndarray, np.ndarray]:
        check_is_fitted(self, "class_log_prior_")
        X = check_array(X, accept_sparse="csr", dtype=np.float64)
        _check_width(X, self.n_features_in_)
        neg = np.asarray(X @ self.feature_log_prob_neg_.T) + self.class_log_prior_[:, 0]
        pos = np.asarray(X @ self.feature_log_prob_pos_.T) + self.class_log_prior_[:, 1]
        return neg, pos

    def predict_two_class_proba(self, X) -> np.ndarray:
        """Posterior of (negative, positive) per topic, shape (n_samples, n_topics, 2)."""
        neg, pos = self.joint_log_likelihood(X)
        return np.stack([expit(neg - pos), expit(pos - neg)], axis=-1)

    def predict_proba(self, X) -> np.ndarray:
        neg, pos = self.joint_log_likelihood(X)
        return expit(pos - neg)

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.uint8)

    def state_json(self) -> dict:
        check_is_fitted(self, "class_log_prior_")
        return {
            "kind": self.kind,
            "params": self.get_params(),
            "feature_log_prob_pos": self.feature_log_prob_pos_.tolist(),
            "feature_log_prob_neg": self.feature_log_prob_neg_.tolist(),
            "class_log_prior": self.class_log_prior_.tolist(),
            "class_weight": self.class_weight_.tolist(),
            "n_features_in": int(self.n_features_in_),
        }

    @classmethod
    def from_state_json(cls, obj: dict) -> "MultinomialNBOVR":
        model = cls(**obj["params"])
        d = int(obj["n_features_in"])
        model.feature_log_prob_pos_ = np.array(obj["feature_log_prob_pos"], dtype=np.float64).reshape(-1, d)
        model.feature_log_prob_neg_ = np.array(obj["feature_log_prob_neg"], dtype=np.float64).reshape(-1, d)
        model.class_log_prior_ = np.array(obj["class_log_prior"], dtype=np.float64).reshape(-1, 2)
        model.class_weight_ = np.array(obj["class_weight"], dtype=np.float64)
        model.n_features_in_ = d
        model.classes_ = np.arange(model.class_log_prior_.shape[0])
        return model


CLASSIFIERS = {"logistic": WeightedLogisticOVR, "mnb": MultinomialNBOVR}


def classifier_from_state(obj: dict):
    try:
        cls = CLASSIFIERS[obj["kind"]]
    except KeyError:
        raise ValueError(f"unknown classifier kind {obj.get('kind')!r}") from None
    return cls.from_state_json(obj)


def _check_width(X, width: int) -> None:
    if X.shape[1] != width:
        raise ValueError(f"feature width {X.shape[1]} does not match the model's {width}")


def train_logistic_ovr(features, labels, weights=None, cfg: TrainConfig = TrainConfig(),
                       n_jobs: Optional[int] = None) -> WeightedLogisticOVR:
    use = True if cfg.use_class_weights is None else cfg.use_class_weights
    model = WeightedLogisticOVR(cfg.learning_rate, cfg.max_iters, cfg.l2, cfg.tol, use, n_jobs)
    return model.fit(features, labels, class_weights=weights if use else None)


def train_mnb_ovr(features, labels, cfg: TrainConfig = TrainConfig(), alpha: float = 1.0) -> MultinomialNBOVR:
    use = False if cfg.use_class_weights is None else cfg.use_class_weights
    return MultinomialNBOVR(alpha=alpha, use_class_weights=use).fit(features, labels)


def predict_scores(model, x) -> np.ndarray:
    """Per-topic scores for a single feature vector (SparseVector or 1-row matrix)."""
    if hasattr(x, "to_csr"):
        x = x.to_csr()
    elif not sp.issparse(x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[0] != 1:
        raise ValueError("predict_scores takes exactly one vector")
    return model.predict_proba(x)[0]


class Recommendation(NamedTuple):
    topic: str
    score: float


def recommend(scores: Sequence[float], n: int, topics: Sequence[str]) -> list[Recommendation]:
    """Top-``n`` topics by descending score; equal scores are ordered by topic name."""
    scores = np.asarray(scores, dtype=np.float64)
    if len(topics) != len(scores):
        raise ValueError("scores and topics differ in length")
    if not 1 <= n <= len(scores):
        raise ValueError(f"n must lie in [1, {len(scores)}], got {n}")
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], topics[i]))
    return [Recommendation(topics[i], float(scores[i])) for i in order[:n]]
