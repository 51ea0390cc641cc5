"""scikit-learn style wrapper around training and inference."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .data import Dataset
from .forward import forward, predict
from .layers import architecture
from .train import TrainConfig, train


class CNNClassifier(ClassifierMixin, BaseEstimator):
    """Fit one of the named architectures on ``(n, H, W, C)`` images in [0, 1]."""

    def __init__(self, arch="mnist-cnn", learning_rate=0.001, epochs=10, batch_size=32,
                 validation_fraction=0.0, early_stop_patience=None, seed=0):
        self.arch = arch
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.validation_fraction = validation_fraction
        self.early_stop_patience = early_stop_patience
        self.seed = seed

    def fit(self, X, y):
        self.net_ = architecture(self.arch)
        cfg = TrainConfig(self.learning_rate, self.epochs, self.batch_size, self.validation_fraction,
                          self.early_stop_patience, self.seed)
        data = Dataset(np.asarray(X, dtype=np.float32), np.asarray(y, dtype=np.int64), "train", self.net_.classes)
        self.weights_ = train(self.net_, data, cfg)
        self.classes_ = np.arange(self.net_.classes)
        return self

    def predict_proba(self, X):
        return forward(self.net_, self.weights_, X)

    def predict(self, X):
        return predict(self.net_, self.weights_, X)
