"""Loss functions together with the Lipschitz data the robustness bounds need.

Two losses are provided:

* softmax cross-entropy, 2-Lipschitz with respect to the max-norm of the logits;
* the Euclidean distance ``||f(x) - y||_2`` (unsquared), 1-Lipschitz in the
  2-norm. It is sometimes called "MSE" but it is not squared here, because
  the squared form is not globally Lipschitz.
"""
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import InputError, NumericError

SOFTMAX_CE = "softmax_ce"
EUCLID = "euclid"


@dataclass(frozen=True)
class LossKind:
    tag: str
    lipschitz_constant: float
    lipschitz_norm: float
    upper_bound: Optional[float] = None

    @property
    def is_classification(self):
        return self.tag == SOFTMAX_CE

    def with_upper_bound(self, c2):
        return replace(self, upper_bound=float(c2))

    def value(self, out, y):
        if self.tag == SOFTMAX_CE:
            return ce_loss(out, y)
        return euclid_loss(out, y)

    def grad(self, out, y):
        """Gradient of the loss with respect to the model output ``out``."""
        if self.tag == SOFTMAX_CE:
            return ce_grad(out, y)
        return euclid_grad(out, y)


CE = LossKind(SOFTMAX_CE, 2.0, math.inf)
EUCLIDEAN = LossKind(EUCLID, 1.0, 2.0)


def get_loss(name):
    """Look up a loss by its CLI name (``ce`` or ``euclid``)."""
    try:
        return {"ce": CE, SOFTMAX_CE: CE, "euclid": EUCLIDEAN, EUCLID: EUCLIDEAN}[name]
    except KeyError:
        raise InputError(f"unknown loss {name!r}; expected 'ce' or 'euclid'") from None


def _check_logits(logits):
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1 or logits.size == 0:
        raise InputError(f"logits must be a non-empty 1-d array, got shape {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits")
    return logits


def softmax(logits):
    logits = _check_logits(logits)
    e = np.exp(logits - logits.max())
    return e / e.sum()


def log_sum_exp(logits):
    logits = _check_logits(logits)
    top = int(np.argmax(logits))
    rest = np.exp(np.delete(logits, top) - logits[top])
    # log1p keeps full relative precision when one logit dominates
    return logits[top] + math.log1p(rest.sum())


def _check_class(y, c):
    if isinstance(y, (bool, np.bool_)) or int(y) != y:
        raise InputError(f"class index must be an integer, got {y!r}")
    y = int(y)
    if not 0 <= y < c:
        raise InputError(f"class index {y} out of range for {c} classes")
    return y


def ce_loss(logits, y):
    logits = _check_logits(logits)
    y = _check_class(y, logits.size)
    return max(float(log_sum_exp(logits) - logits[y]), 0.0)


def ce_grad(logits, y):
    p = softmax(logits)
    y = _check_class(y, p.size)
    p[y] -= 1.0
    return p


def _check_pair(pred, target):
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if pred.shape != target.shape:
        raise InputError(f"dimension mismatch: prediction {pred.shape[0]}, target {target.shape[0]}")
    return pred, target


def euclid_loss(pred, target):
    pred, target = _check_pair(pred, target)
    return float(np.linalg.norm(pred - target))


def euclid_grad(pred, target):
    pred, target = _check_pair(pred, target)
    diff = pred - target
    norm = np.linalg.norm(diff)
    if norm == 0.0:
        return np.zeros_like(diff)
    return diff / norm


def batch_value_and_grad(kind, outputs, targets):
    """Per-sample losses and output gradients for a batch, vectorized.

    ``outputs`` has shape (n, c). ``targets`` holds class indices (n,) for
    cross-entropy and target rows (n, c) for the Euclidean loss.
    """
    F = np.asarray(outputs, dtype=np.float64)
    if not np.all(np.isfinite(F)):
        raise NumericError("non-finite model outputs")
    n = F.shape[0]
    if kind.tag == SOFTMAX_CE:
        y = np.asarray(targets).astype(np.int64).reshape(-1)
        if y.shape[0] != n or y.min() < 0 or y.max() >= F.shape[1]:
            raise InputError("class labels inconsistent with model outputs")
        top = F.max(axis=1, keepdims=True)
        e = np.exp(F - top)
        s = e.sum(axis=1)
        values = top[:, 0] + np.log1p(s - 1.0) - F[np.arange(n), y]
        grad = e / s[:, None]
        grad[np.arange(n), y] -= 1.0
        return np.maximum(values, 0.0), grad
    T = np.asarray(targets, dtype=np.float64).reshape(n, -1)
    if T.shape != F.shape:
        raise InputError(f"targets of shape {T.shape} do not match outputs {F.shape}")
    diff = F - T
    values = np.linalg.norm(diff, axis=1)
    safe = np.where(values > 0.0, values, 1.0)
    grad = np.where(values[:, None] > 0.0, diff / safe[:, None], 0.0)
    return values, grad
