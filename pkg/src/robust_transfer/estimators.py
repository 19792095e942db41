"""scikit-learn compatible wrappers around pretraining and transfer.

``RepresentationTransformer`` pretrains an MLP representation and maps inputs
to features. ``TransferClassifier`` and ``TransferRegressor`` fit a linear head
on a given representation by LP, FT or LP-FT.
"""
from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .attack import AttackConfig
from .errors import InputError
from .losses import CE, EUCLIDEAN, softmax
from .model import ComposedModel, MlpRepresentation, init_head, model_forward, random_representation, rep_forward
from .theory import as_score
from .train import FT, LP, LPFT, TrainConfig, adversarial_pretrain, finetune_with_new_head, linear_probe, lp_ft, \
    standard_pretrain


def _as_rows(fn, X):
    return np.atleast_2d(fn(X))


class RepresentationTransformer(TransformerMixin, BaseEstimator):
    """Pretrain ``g`` (optionally adversarially) on a labeled task; ``transform`` returns ``g(X)``."""

    def __init__(self, hidden=(32, 16), activation="relu", epochs=20, batch_size=128, lr=0.01,
                 momentum=0.9, weight_decay=0.0, adv_eps=0.0, attack_norm="linf", attack_steps=10,
                 random_state=0):
        self.hidden = hidden
        self.activation = activation
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.adv_eps = adv_eps
        self.attack_norm = attack_norm
        self.attack_steps = attack_steps
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        check_classification_targets(y)
        self.classes_, yi = np.unique(y, return_inverse=True)
        seed = int(self.random_state or 0)
        rep = random_representation([X.shape[1], *self.hidden], self.activation, seed=seed)
        model = ComposedModel(rep, init_head(rep.output_dim, len(self.classes_), seed=seed))
        adv = None
        if self.adv_eps > 0:
            adv = AttackConfig(norm=self.attack_norm, epsilon=self.adv_eps, steps=self.attack_steps, seed=seed)
        cfg = TrainConfig(method="pretrain", epochs=self.epochs, batch_size=self.batch_size, lr0=self.lr,
                          momentum=self.momentum, weight_decay=self.weight_decay, adversarial=adv, seed=seed)
        self.history_ = []
        train = adversarial_pretrain if adv is not None else standard_pretrain
        self.model_ = train(model, X, yi, cfg, self.history_)
        self.representation_ = self.model_.rep
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "representation_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise InputError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return _as_rows(lambda Z: rep_forward(self.representation_, Z), X)

    def as_score(self, X, epsilon, norm="linf", steps=20, relative_step_size=0.7):
        check_is_fitted(self, "representation_")
        cfg = AttackConfig(norm=norm, epsilon=epsilon, steps=steps, relative_step_size=relative_step_size,
                           seed=int(self.random_state or 0))
        return as_score(self.representation_, check_array(X), cfg)[0]


class _TransferBase(BaseEstimator):
    def __init__(self, representation=None, method=LP, epochs=20, batch_size=128, lr=0.01, finetune_lr=None,
                 momentum=0.9, weight_decay=0.0, random_state=0):
        self.representation = representation
        self.method = method
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.finetune_lr = finetune_lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.random_state = random_state

    def _rep(self):
        rep = self.representation
        rep = getattr(rep, "representation_", rep)
        rep = getattr(rep, "rep", rep)
        if not isinstance(rep, MlpRepresentation):
            raise InputError("representation must be an MlpRepresentation, a ComposedModel "
                             "or a fitted RepresentationTransformer")
        return rep

    def _fit(self, X, Y, loss, n_outputs):
        if self.method not in (LP, FT, LPFT):
            raise InputError(f"method must be one of lp, ft, lpft; got {self.method!r}")
        rep = self._rep()
        if X.shape[1] != rep.input_dim:
            raise InputError(f"representation expects {rep.input_dim} features, got {X.shape[1]}")
        cfg = TrainConfig(method=self.method, epochs=self.epochs, batch_size=self.batch_size, lr0=self.lr,
                          momentum=self.momentum, weight_decay=self.weight_decay, loss=loss,
                          seed=int(self.random_state or 0), finetune_lr0=self.finetune_lr)
        self.history_ = []
        if self.method == LP:
            self.model_ = linear_probe(rep, X, Y, cfg, n_outputs=n_outputs, history=self.history_)
        elif self.method == FT:
            if self.finetune_lr is not None:
                cfg = replace(cfg, lr0=self.finetune_lr)
            self.model_ = finetune_with_new_head(rep, X, Y, cfg, n_outputs=n_outputs, history=self.history_)
        else:
            self.model_ = lp_ft(rep, X, Y, cfg, n_outputs=n_outputs, history=self.history_)
        self.n_features_in_ = X.shape[1]
        return self

    def _outputs(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise InputError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return _as_rows(lambda Z: model_forward(self.model_, Z), X)


class TransferClassifier(ClassifierMixin, _TransferBase):
    """Linear head on a pretrained representation, trained with softmax cross-entropy."""

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        check_classification_targets(y)
        self.classes_, yi = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise InputError("need at least two classes")
        return self._fit(X, yi, CE, len(self.classes_))

    def decision_function(self, X):
        return self._outputs(X)

    def predict_proba(self, X):
        return np.array([softmax(row) for row in self._outputs(X)])

    def predict(self, X):
        return self.classes_[np.argmax(self._outputs(X), axis=1)]


class TransferRegressor(RegressorMixin, _TransferBase):
    """Linear head on a pretrained representation, trained with the (unsquared) Euclidean loss."""

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        Y = y.reshape(len(y), -1).astype(np.float64)
        self._single_output = y.ndim == 1
        return self._fit(X, Y, EUCLIDEAN, Y.shape[1])

    def predict(self, X):
        out = self._outputs(X)
        return out[:, 0] if self._single_output else out
