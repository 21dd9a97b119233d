"""scikit-learn compatible wrappers around the network and the normalizer."""
from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .archspec import ArchSpec, load_arch, parse_arch
from .data import AugmentConfig, Dataset, compute_norm_stats, denormalize, normalize
from .network import build
from .optim import TrainConfig, fit


def _as_images(X, shape=None):
    X = check_array(X, allow_nd=True, dtype=np.float32, ensure_all_finite=True)
    if X.ndim == 3:
        X = X[:, None]
    elif X.ndim == 2 and shape is not None:
        X = X.reshape(len(X), *shape)
    if X.ndim != 4:
        raise ValueError(f"expected images shaped (n, c, h, w), got {X.shape}")
    return X


class ChannelStandardizer(TransformerMixin, BaseEstimator):
    """Per-channel standardization of (n, c, h, w) image batches."""

    def fit(self, X, y=None):
        X = _as_images(X)
        self.mean_, self.std_ = compute_norm_stats(X)
        self.n_channels_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = _as_images(X)
        if X.shape[1] != self.n_channels_in_:
            raise ValueError(f"fitted on {self.n_channels_in_} channels, got {X.shape[1]}")
        return normalize(X, self.mean_, self.std_)

    def inverse_transform(self, X):
        check_is_fitted(self, "mean_")
        return denormalize(_as_images(X), self.mean_, self.std_)


class SimpleNetClassifier(ClassifierMixin, BaseEstimator):
    """Image classifier trained with momentum SGD.

    Parameters
    ----------
    arch : str or ArchSpec
        Preset name, path to an architecture file, or architecture text.
        The architecture's ``input`` must match the images; ``classes`` is replaced by
        the number of distinct labels seen in ``fit``.
    epochs, lr, momentum, weight_decay, batch_size :
        Training schedule; the learning rate drops x0.1 at 50% and 75% of
        the epochs.
    augment : bool
        Zero-pad by 4, random crop back, random mirror.
    normalize : bool
        Standardize per channel with statistics of the training images.
    random_state : int
        Seeds initialization, shuffling, dropout and augmentation.
    """

    def __init__(self, arch="simplenet-slim", epochs=15, lr=0.1, momentum=0.9, weight_decay=0.005,
                 batch_size=128, augment=False, normalize=True, random_state=0):
        self.arch = arch
        self.epochs = epochs
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.augment = augment
        self.normalize = normalize
        self.random_state = random_state

    def _spec(self) -> ArchSpec:
        if isinstance(self.arch, ArchSpec):
            return self.arch
        if "\n" in self.arch:
            return parse_arch(self.arch)
        return load_arch(self.arch)

    def fit(self, X, y):
        X, y = check_X_y(X, y, allow_nd=True, dtype=np.float32)
        X = _as_images(X)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        spec = self._spec()
        layers = spec.layers[:-1] + (replace(spec.layers[-1], out=len(self.classes_)),)
        spec = replace(spec, classes=len(self.classes_), layers=layers)
        self.norm_ = compute_norm_stats(X) if self.normalize else None
        aug = AugmentConfig(4, X.shape[2], True) if self.augment else None
        cfg = TrainConfig(lr0=self.lr, momentum=self.momentum, weight_decay=self.weight_decay,
                          batch=self.batch_size, epochs=self.epochs, seed=self.random_state, augment=aug)
        train = Dataset(X, encoded.astype(np.int64), "train", len(self.classes_), self.norm_)
        self.network_ = build(spec, self.random_state)
        self.history_ = fit(self.network_, train, None, cfg)
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def decision_function(self, X):
        check_is_fitted(self, "network_")
        X = _as_images(X, self.network_.spec.input)
        if self.norm_ is not None:
            X = normalize(X, *self.norm_)
        return self.network_.predict_logits(X, self.batch_size)

    def predict_proba(self, X):
        z = self.decision_function(X).astype(np.float64)
        z -= z.max(axis=1, keepdims=True)
        p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[scores.argmax(axis=1)]
