"""Primal linear SVM trained by per-example hinge subgradient descent.

A model is a flat float64 vector ``[w_1, ..., w_d, b]`` with the bias stored
last, so norms, clipping and noise treat it as one vector of length d + 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


@dataclass(frozen=True)
class TrainConfig:
    local_epochs: int = 1
    learning_rate: float = 0.01
    lr_decay: float = 0.98
    l2_lambda: float = 0.03

    def __post_init__(self):
        if self.local_epochs < 1:
            raise ValueError(f"local_epochs must be >= 1, got {self.local_epochs}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 < self.lr_decay <= 1:
            raise ValueError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if self.l2_lambda < 0:
            raise ValueError(f"l2_lambda must be >= 0, got {self.l2_lambda}")


@dataclass(frozen=True)
class EvalMetrics:
    accuracy: float
    hinge_loss: float
    n_examples: int


def zero_model(n_features: int) -> np.ndarray:
    return np.zeros(n_features + 1)


def decision_values(w, X):
    X = np.asarray(X, dtype=float)
    return X @ w[:-1] + w[-1]


def _require_data(X, y):
    if len(y) == 0:
        raise ValueError("empty dataset")
    if len(X) != len(y):
        raise ValueError(f"X has {len(X)} rows but y has {len(y)} labels")


def hinge_objective(w, X, y, l2_lambda: float = 0.0) -> float:
    """Mean hinge loss plus ``l2_lambda / 2 * ||weights||^2`` (bias unpenalised)."""
    _require_data(X, y)
    margins = np.asarray(y) * decision_values(w, X)
    hinge = np.maximum(0.0, 1.0 - margins).mean()
    return float(hinge + 0.5 * l2_lambda * np.dot(w[:-1], w[:-1]))


def hinge_subgradient(w, X, y, l2_lambda: float = 0.0) -> np.ndarray:
    """Subgradient of :func:`hinge_objective`, taking 0 for the hinge at margin 1."""
    _require_data(X, y)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    active = y * decision_values(w, X) < 1.0
    g = np.zeros_like(w)
    g[:-1] = -(y[active, None] * X[active]).sum(axis=0) / len(y) + l2_lambda * w[:-1]
    g[-1] = -y[active].sum() / len(y)
    return g


@njit(cache=True)
def _sgd_epoch(w, X, y, order, lr, lam):
    d = X.shape[1]
    for idx in order:
        yi = y[idx]
        s = w[d]
        for j in range(d):
            s += w[j] * X[idx, j]
        if yi * s < 1.0:
            for j in range(d):
                w[j] -= lr * (lam * w[j] - yi * X[idx, j])
            w[d] += lr * yi
        else:
            for j in range(d):
                w[j] -= lr * lam * w[j]


def local_train(w_init, X, y, cfg: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    """Run ``cfg.local_epochs`` epochs of SGD on the hinge objective.

    Each epoch visits the examples in a fresh permutation drawn from ``rng``;
    the step size starts at ``cfg.learning_rate`` and is multiplied by
    ``cfg.lr_decay`` after every epoch. ``w_init`` is not modified.
    """
    _require_data(X, y)
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    w = np.array(w_init, dtype=np.float64, copy=True)
    if w.shape != (X.shape[1] + 1,):
        raise ValueError(f"model has shape {w.shape}, expected ({X.shape[1] + 1},)")
    lr = cfg.learning_rate
    for _ in range(cfg.local_epochs):
        _sgd_epoch(w, X, y, rng.permutation(len(y)), lr, cfg.l2_lambda)
        lr *= cfg.lr_decay
    return w


def evaluate(w, X, y) -> EvalMetrics:
    """Accuracy and unregularised hinge loss; a zero decision value predicts +1."""
    _require_data(X, y)
    y = np.asarray(y, dtype=float)
    scores = decision_values(w, X)
    pred = np.where(scores >= 0.0, 1.0, -1.0)
    correct = int(np.count_nonzero(pred == y))
    hinge = float(np.maximum(0.0, 1.0 - y * scores).mean())
    return EvalMetrics(accuracy=correct / len(y), hinge_loss=hinge, n_examples=len(y))


def leakage_demo(w, x, y: float):
    """Gradient of the squared loss ``|y - w.x|^2`` for one example.

    Returns ``(g, cosine)`` with ``g = x * (y - w.x)`` (sign and factor 2
    dropped, bias-free) and ``cosine = |cos(g, x)|``. The gradient is a scalar
    multiple of the raw input, so the cosine is 1 whenever the residual is
    nonzero; it is NaN for a zero residual.
    """
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    x_norm = np.linalg.norm(x)
    if x_norm == 0.0:
        raise ValueError("cosine is undefined for a zero input vector")
    g = x * (y - w @ x)
    g_norm = np.linalg.norm(g)
    if g_norm == 0.0:
        return g, float("nan")
    return g, float(abs(g @ x) / (g_norm * x_norm))


class LinearSVM(ClassifierMixin, BaseEstimator):
    """Binary linear SVM fit with the same SGD routine the federated clients use.

    Training runs ``n_rounds`` consecutive calls of ``local_epochs`` epochs
    each; the learning-rate schedule restarts at every call, which makes a
    centralized fit comparable epoch-for-epoch with federated training.

    Parameters
    ----------
    local_epochs : int, default=1
    n_rounds : int, default=50
    learning_rate : float, default=0.01
    lr_decay : float, default=0.98
        Per-epoch multiplier applied to the learning rate.
    l2_lambda : float, default=0.03
    random_state : int or None, default=None
        Seed for the per-epoch shuffles.
    """

    def __init__(self, local_epochs=1, n_rounds=50, learning_rate=0.01,
                 lr_decay=0.98, l2_lambda=0.03, random_state=None):
        self.local_epochs = local_epochs
        self.n_rounds = n_rounds
        self.learning_rate = learning_rate
        self.lr_decay = lr_decay
        self.l2_lambda = l2_lambda
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(self.local_epochs, self.learning_rate, self.lr_decay, self.l2_lambda)

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        check_classification_targets(y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError(f"LinearSVM is binary; got {len(self.classes_)} classes")
        self.n_features_in_ = X.shape[1]
        signed = np.where(y == self.classes_[1], 1.0, -1.0)
        cfg = self._train_config()
        rng = np.random.default_rng(self.random_state)
        w = zero_model(X.shape[1])
        for _ in range(self.n_rounds):
            w = local_train(w, X, signed, cfg, rng)
        self.model_ = w
        return self

    @property
    def coef_(self):
        check_is_fitted(self, "model_")
        return self.model_[None, :-1]

    @property
    def intercept_(self):
        check_is_fitted(self, "model_")
        return self.model_[-1:]

    def decision_function(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return decision_values(self.model_, X)

    def predict(self, X):
        return self.classes_[(self.decision_function(X) >= 0).astype(int)]
