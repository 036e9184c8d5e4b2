"""sklearn-shaped wrapper around the numpy model.

Usage mirrors any sklearn classifier::

    clf = make_pipeline(PlanTokenizer(seed=0), FeasibilityClassifier(epochs=50))
    clf.fit(pairs, labels)
    clf.predict_proba(pairs)[:, 1]
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .model import ModelConfig, forward, init_model
from .serialize import load_model_with_extra, save_model
from .train import TrainConfig, train


class FeasibilityClassifier(BaseEstimator, ClassifierMixin):
    """X is a list of TokenSequence objects (see PlanTokenizer)."""

    def __init__(self, d=32, layers=2, heads=2, ff=64, name_mode="learned", epochs=100, batch_size=32,
                 lr=1e-3, class_weight=None, seed=0):
        self.d = d
        self.layers = layers
        self.heads = heads
        self.ff = ff
        self.name_mode = name_mode
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.class_weight = class_weight
        self.seed = seed

    def _model_config(self) -> ModelConfig:
        return ModelConfig(d=self.d, layers=self.layers, heads=self.heads, ff=self.ff, name_mode=self.name_mode)

    def fit(self, X, y, X_val=None, y_val=None, log=None):
        y = np.asarray(y).astype(int)
        if len(X) == 0:
            raise ValueError("empty training set")
        rng = np.random.default_rng(self.seed)
        model = init_model(self._model_config(), rng)
        val = (list(X_val), np.asarray(y_val)) if X_val is not None else None
        cfg = TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr, class_weight=self.class_weight)
        self.model_, self.history_ = train(model, list(X), y, cfg, rng, val=val, log=log)
        self.classes_ = np.array([0, 1])
        self.n_params_ = self.model_.n_params()
        return self

    def _check(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("FeasibilityClassifier is not fitted yet")

    def predict_proba(self, X) -> np.ndarray:
        self._check()
        p = forward(self.model_, list(X)) if len(X) else np.zeros(0)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)

    def save(self, path, extra: dict | None = None):
        self._check()
        save_model(self.model_, path, extra)

    @classmethod
    def load(cls, path) -> FeasibilityClassifier:
        model, extra = load_model_with_extra(path)
        c = model.config
        clf = cls(d=c.d, layers=c.layers, heads=c.heads, ff=c.ff, name_mode=c.name_mode)
        clf.model_ = model
        clf.classes_ = np.array([0, 1])
        clf.n_params_ = model.n_params()
        clf.extra_ = extra
        return clf
