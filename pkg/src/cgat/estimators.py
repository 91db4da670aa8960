"""Scikit-learn style estimators wrapping the hashing trainers.

``fit(X, y)`` expects features in [0,1] and multi-hot label rows;
``transform(X)`` returns binary codes in {-1,+1} ready for a Hamming
index. All hyperparameters are exposed through ``get_params`` /
``set_params`` so the encoders compose with sklearn pipelines and
searches.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array

from cgat.attack import AdvConfig
from cgat.model import forward_codes, hash_codes, init_model
from cgat.train import TrainConfig, pretrain_baseline, train_cgat


def _check_inputs(X, y=None):
    X = check_array(X, dtype=np.float64)
    if X.min(initial=0.0) < 0 or X.max(initial=0.0) > 1:
        raise ValueError("features must lie in [0,1]")
    if y is None:
        return X
    y = check_array(y, dtype=np.float64)
    if y.shape[0] != X.shape[0]:
        raise ValueError("X and y must have the same number of rows")
    if not ((y == 0) | (y == 1)).all():
        raise ValueError("y must be a multi-hot 0/1 label matrix")
    if not y.any(axis=1).all():
        raise ValueError("every sample needs at least one active class")
    return X, y


class _HashingEncoderBase(TransformerMixin, BaseEstimator):
    def _train_config(self, with_adv: bool) -> TrainConfig:
        adv = AdvConfig(epsilon=self.epsilon, alpha=self.alpha, steps=self.attack_steps)
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            lam=self.lam if with_adv else 0.0,
            adv=adv,
            seed=self.random_state,
        )

    def _init(self, n_features: int):
        return init_model([n_features, *self.hidden_dims, self.n_bits], seed=self.random_state)

    def transform(self, X):
        """Binary codes in {-1,+1}^K for each row of X."""
        self._require_fitted()
        X = _check_inputs(X)
        if X.shape[1] != self.model_.input_dim:
            raise ValueError(f"expected {self.model_.input_dim} features, got {X.shape[1]}")
        return hash_codes(self.model_, X)

    def decision_function(self, X):
        """Continuous codes in (-1,1)^K, before sign quantization."""
        self._require_fitted()
        X = _check_inputs(X)
        return forward_codes(self.model_, X)

    def _require_fitted(self):
        if getattr(self, "model_", None) is None:
            raise NotFittedError("call fit before transform")


class BaselineHashingEncoder(_HashingEncoderBase):
    """Pairwise-loss hashing encoder without adversarial training."""

    def __init__(self, n_bits=16, hidden_dims=(128, 64), epochs=30, batch_size=32,
                 learning_rate=0.01, momentum=0.9, weight_decay=5e-4,
                 epsilon=8 / 255, alpha=2 / 255, attack_steps=7, lam=1.0,
                 random_state=0):
        self.n_bits = n_bits
        self.hidden_dims = hidden_dims
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.epsilon = epsilon
        self.alpha = alpha
        self.attack_steps = attack_steps
        self.lam = lam
        self.random_state = random_state

    def fit(self, X, y):
        X, y = _check_inputs(X, y)
        self.model_ = self._init(X.shape[1])
        self.train_log_ = pretrain_baseline(self.model_, X, y, self._train_config(with_adv=False))
        return self


class CenterGuidedHashingEncoder(_HashingEncoderBase):
    """Adversarially trained hashing encoder.

    Warm-starts with ``pretrain_epochs`` of plain training, then runs the
    center-guided min-max loop: PGD adversarial batches against
    per-sample center codes, combined loss ``base + lam * adversarial``.
    """

    def __init__(self, n_bits=16, hidden_dims=(128, 64), epochs=30, pretrain_epochs=30,
                 batch_size=32, learning_rate=0.01, momentum=0.9,
                 weight_decay=5e-4, lam=1.0, epsilon=8 / 255, alpha=2 / 255,
                 attack_steps=7, random_state=0):
        self.n_bits = n_bits
        self.hidden_dims = hidden_dims
        self.epochs = epochs
        self.pretrain_epochs = pretrain_epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.lam = lam
        self.epsilon = epsilon
        self.alpha = alpha
        self.attack_steps = attack_steps
        self.random_state = random_state

    def fit(self, X, y):
        X, y = _check_inputs(X, y)
        self.model_ = self._init(X.shape[1])
        cfg = self._train_config(with_adv=True)
        if self.pretrain_epochs:
            pre_cfg = self._train_config(with_adv=False)
            pre_cfg.epochs = self.pretrain_epochs
            self.pretrain_log_ = pretrain_baseline(self.model_, X, y, pre_cfg)
        else:
            self.pretrain_log_ = None
        self.train_log_ = train_cgat(self.model_, X, y, cfg)
        return self
