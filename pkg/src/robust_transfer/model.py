"""Composed models ``f(x) = W g(x) (+ b)``.

``g`` is an :class:`MlpRepresentation` (a chain of affine layers with ReLU,
identity or tanh activations) and ``W`` is a :class:`LinearHead`. Forward and
reverse passes accept a single input of shape (d,) or a batch (n, d).
"""
import copy
import json
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import losses
from ._rng import stream
from .errors import InputError, NumericError, ParseError
from .numcore import as_matrix, as_vector

ACTIVATIONS = ("relu", "identity", "tanh")
FORMAT_VERSION = 1


def _activate(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _activation_slope(name, pre, post):
    if name == "relu":
        # subgradient 0 at the kink
        return (pre > 0.0).astype(np.float64)
    if name == "tanh":
        return 1.0 - post * post
    return np.ones_like(pre)


@dataclass(eq=False)
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        self.weight = as_matrix(self.weight, "layer weight")
        self.bias = as_vector(self.bias, "layer bias")
        if self.bias.shape[0] != self.weight.shape[0]:
            raise InputError(f"bias has {self.bias.shape[0]} entries but weight has {self.weight.shape[0]} rows")
        if self.activation not in ACTIVATIONS:
            raise InputError(f"unknown activation {self.activation!r}")


@dataclass(eq=False)
class MlpRepresentation:
    layers: List[Layer]

    def __post_init__(self):
        if not self.layers:
            raise InputError("a representation needs at least one layer")
        for k in range(1, len(self.layers)):
            if self.layers[k].weight.shape[1] != self.layers[k - 1].weight.shape[0]:
                raise InputError(f"layer {k} expects {self.layers[k].weight.shape[1]} inputs "
                                 f"but layer {k - 1} produces {self.layers[k - 1].weight.shape[0]}")

    @property
    def input_dim(self):
        return self.layers[0].weight.shape[1]

    @property
    def output_dim(self):
        return self.layers[-1].weight.shape[0]

    def __call__(self, x):
        return rep_forward(self, x)

    def parameters(self):
        out = []
        for layer in self.layers:
            out.extend([layer.weight, layer.bias])
        return out


@dataclass(eq=False)
class LinearHead:
    weight: np.ndarray
    bias: Optional[np.ndarray] = None

    def __post_init__(self):
        self.weight = as_matrix(self.weight, "head weight")
        if self.bias is not None:
            self.bias = as_vector(self.bias, "head bias")
            if self.bias.shape[0] != self.weight.shape[0]:
                raise InputError("head bias length does not match the number of head rows")

    @property
    def n_outputs(self):
        return self.weight.shape[0]

    def parameters(self):
        return [self.weight] if self.bias is None else [self.weight, self.bias]


@dataclass(eq=False)
class ComposedModel:
    rep: MlpRepresentation
    head: LinearHead
    freeze_rep: bool = False
    train_steps: int = field(default=0, repr=False)

    def __post_init__(self):
        if self.head.weight.shape[1] != self.rep.output_dim:
            raise InputError(f"head expects {self.head.weight.shape[1]} features "
                             f"but the representation produces {self.rep.output_dim}")

    @property
    def input_dim(self):
        return self.rep.input_dim

    @property
    def n_outputs(self):
        return self.head.n_outputs

    def __call__(self, x):
        return model_forward(self, x)

    def parameters(self):
        """Parameter arrays in a fixed order: layer weights and biases, then the head."""
        return self.rep.parameters() + self.head.parameters()

    def weight_mask(self):
        """True for weight matrices, False for biases (biases are never decayed)."""
        return [p.ndim == 2 for p in self.parameters()]

    def rep_mask(self):
        n_rep = 2 * len(self.rep.layers)
        return [i < n_rep for i in range(len(self.parameters()))]

    def copy(self):
        return copy.deepcopy(self)


@dataclass
class ParamGrads:
    grads: List[np.ndarray]
    loss: float
    per_sample_loss: np.ndarray = field(repr=False, default=None)


# -- construction helpers ----------------------------------------------------

def identity_representation(d):
    return MlpRepresentation([Layer(np.eye(d), np.zeros(d), "identity")])


def random_representation(sizes, activation="relu", seed=0, final_activation=None):
    """MLP with layer widths ``sizes = [d, h1, ..., r]``.

    Weights and biases are drawn uniformly from ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``.
    """
    if len(sizes) < 2:
        raise InputError("sizes must list the input width and at least one layer width")
    rng = stream(seed, "init", 0)
    layers = []
    for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = 1.0 / math.sqrt(n_in)
        act = activation
        if k == len(sizes) - 2 and final_activation is not None:
            act = final_activation
        layers.append(Layer(rng.uniform(-bound, bound, size=(n_out, n_in)),
                            rng.uniform(-bound, bound, size=n_out), act))
    return MlpRepresentation(layers)


def init_head(r, c, seed=0, bias=True):
    """Head with entries uniform in ``[-1/sqrt(r), 1/sqrt(r)]`` and a zero bias."""
    bound = 1.0 / math.sqrt(r)
    weight = stream(seed, "init", 1).uniform(-bound, bound, size=(c, r))
    return LinearHead(weight, np.zeros(c) if bias else None)


# -- forward / backward ------------------------------------------------------

def _check_input(rep, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != rep.input_dim:
        raise InputError(f"input of shape {x.shape} does not match representation input dim {rep.input_dim}")
    return x


def _forward_cache(rep, x):
    acts = [x]
    pres = []
    for k, layer in enumerate(rep.layers):
        pre = acts[-1] @ layer.weight.T + layer.bias
        post = _activate(layer.activation, pre)
        if not np.all(np.isfinite(post)):
            raise NumericError(f"non-finite activation in layer {k}")
        pres.append(pre)
        acts.append(post)
    return acts, pres


def _backward(rep, acts, pres, grad_out, want_params):
    grad = grad_out
    param_grads = []
    for k in range(len(rep.layers) - 1, -1, -1):
        layer = rep.layers[k]
        dpre = grad * _activation_slope(layer.activation, pres[k], acts[k + 1])
        if want_params:
            a_in = np.atleast_2d(acts[k])
            d2 = np.atleast_2d(dpre)
            param_grads = [d2.T @ a_in, d2.sum(axis=0)] + param_grads
        grad = dpre @ layer.weight
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient in layer {k}")
    return grad, param_grads


def rep_forward(rep, x):
    x = _check_input(rep, x)
    return _forward_cache(rep, x)[0][-1]


def _head_forward(head, g):
    out = g @ head.weight.T
    if head.bias is not None:
        out = out + head.bias
    return out


def model_forward(model, x):
    return _head_forward(model.head, rep_forward(model.rep, x))


def loss_value_and_grad(model, loss, x, y):
    """Loss at a single input and its exact gradient with respect to the input."""
    x = _check_input(model.rep, x)
    if x.ndim != 1:
        raise InputError("loss_value_and_grad expects a single input vector")
    acts, pres = _forward_cache(model.rep, x)
    out = _head_forward(model.head, acts[-1])
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite model output")
    value = loss.value(out, y)
    g_grad = loss.grad(out, y) @ model.head.weight
    grad, _ = _backward(model.rep, acts, pres, g_grad, False)
    return value, grad


def input_gradient(model, loss, x, y):
    return loss_value_and_grad(model, loss, x, y)[1]


def rep_distance_value_and_grad(rep, anchor_features, x):
    """``||g(x) - g_anchor||_2`` and its gradient in ``x``; zero gradient at zero distance."""
    x = _check_input(rep, x)
    acts, pres = _forward_cache(rep, x)
    diff = acts[-1] - anchor_features
    dist = float(np.linalg.norm(diff))
    if dist == 0.0:
        return 0.0, np.zeros_like(x)
    grad, _ = _backward(rep, acts, pres, diff / dist, False)
    return dist, grad


def rep_distance_gradient(rep, anchor, x):
    anchor = _check_input(rep, anchor)
    return rep_distance_value_and_grad(rep, rep_forward(rep, anchor), x)[1]


def param_gradients(model, loss, X, Y):
    """Mean loss gradient over a batch for every parameter, in ``model.parameters()`` order.

    With ``freeze_rep`` set the representation entries are all-zero arrays.
    """
    X = _check_input(model.rep, X)
    X = np.atleast_2d(X)
    if X.shape[0] == 0:
        raise InputError("param_gradients needs a non-empty batch")
    n = X.shape[0]
    acts, pres = _forward_cache(model.rep, X)
    G = acts[-1]
    out = _head_forward(model.head, G)
    values, dout = losses.batch_value_and_grad(loss, out, Y)
    dout = dout / n
    head_grads = [dout.T @ G]
    if model.head.bias is not None:
        head_grads.append(dout.sum(axis=0))
    if model.freeze_rep:
        rep_grads = [np.zeros_like(p) for p in model.rep.parameters()]
    else:
        _, rep_grads = _backward(model.rep, acts, pres, dout @ model.head.weight, True)
    return ParamGrads(rep_grads + head_grads, float(values.mean()), values)


def predict_classes(model, X):
    """Argmax predictions; ties go to the lowest class index."""
    return np.argmax(np.atleast_2d(model_forward(model, X)), axis=1)


# -- serialization -----------------------------------------------------------

def _matrix_record(weight, bias):
    rec = {"rows": int(weight.shape[0]), "cols": int(weight.shape[1]),
           "weights": [float(v) for v in weight.ravel()]}
    if bias is not None:
        rec["bias"] = [float(v) for v in bias]
    return rec


def serialize_model(model):
    """Versioned JSON text. Floats use the shortest repr that round-trips exactly."""
    doc = {
        "format_version": FORMAT_VERSION,
        "input_dim": int(model.rep.input_dim),
        "layers": [dict(_matrix_record(l.weight, l.bias), activation=l.activation) for l in model.rep.layers],
        "head": _matrix_record(model.head.weight, model.head.bias),
    }
    try:
        return json.dumps(doc, allow_nan=False, indent=1)
    except ValueError as exc:
        raise NumericError("model contains non-finite parameters") from exc


def _read_matrix(rec, where, need_bias):
    for key in ("rows", "cols", "weights"):
        if key not in rec:
            raise ParseError(f"{where}: missing field '{key}'")
    rows, cols = rec["rows"], rec["cols"]
    if not (isinstance(rows, int) and isinstance(cols, int) and rows > 0 and cols > 0):
        raise ParseError(f"{where}: fields 'rows'/'cols' must be positive integers")
    weights = np.asarray(rec["weights"], dtype=np.float64)
    if weights.ndim != 1 or weights.size != rows * cols:
        raise ParseError(f"{where}: field 'weights' has {weights.size} values, shape fields say {rows}x{cols}")
    if not np.all(np.isfinite(weights)):
        raise ParseError(f"{where}: field 'weights' contains non-finite values")
    bias = rec.get("bias")
    if bias is None:
        if need_bias:
            raise ParseError(f"{where}: missing field 'bias'")
    else:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.ndim != 1 or bias.size != rows:
            raise ParseError(f"{where}: field 'bias' has {bias.size} values, expected {rows}")
        if not np.all(np.isfinite(bias)):
            raise ParseError(f"{where}: field 'bias' contains non-finite values")
    return weights.reshape(rows, cols), bias


def deserialize_model(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("model file must contain a JSON object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ParseError(f"unsupported format_version {doc.get('format_version')!r}; expected {FORMAT_VERSION}")
    for key in ("input_dim", "layers", "head"):
        if key not in doc:
            raise ParseError(f"missing field '{key}'")
    if not doc["layers"]:
        raise ParseError("field 'layers' is empty")
    layers = []
    prev = doc["input_dim"]
    for k, rec in enumerate(doc["layers"]):
        where = f"layers[{k}]"
        w, b = _read_matrix(rec, where, need_bias=True)
        if w.shape[1] != prev:
            raise ParseError(f"{where}: field 'cols' is {w.shape[1]} but the previous width is {prev}")
        act = rec.get("activation")
        if act not in ACTIVATIONS:
            raise ParseError(f"{where}: field 'activation' must be one of {ACTIVATIONS}")
        layers.append(Layer(w, b, act))
        prev = w.shape[0]
    hw, hb = _read_matrix(doc["head"], "head", need_bias=False)
    if hw.shape[1] != prev:
        raise ParseError(f"head: field 'cols' is {hw.shape[1]} but the representation width is {prev}")
    return ComposedModel(MlpRepresentation(layers), LinearHead(hw, hb))


def save_model(model, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_model(model))
        fh.write("\n")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return deserialize_model(fh.read())
