"""Small model zoo and helpers shared by the test modules."""
import numpy as np

from robust_transfer.losses import CE, EUCLIDEAN
from robust_transfer.model import ComposedModel, LinearHead, identity_representation, init_head, \
    random_representation

KINK_RADIUS = 1e-4
GRAD_RTOL = 1e-4


def build(name, seed=0, n_out=3, bias=True):
    if name == "identity":
        rep = identity_representation(6)
    elif name == "relu":
        rep = random_representation([20, 32, 16], "relu", seed=seed)
    elif name == "tanh":
        rep = random_representation([5, 7, 3], "tanh", seed=seed)
    elif name == "mixed":
        rep = random_representation([4, 6, 5], "relu", seed=seed, final_activation="tanh")
    else:
        raise KeyError(name)
    return ComposedModel(rep, init_head(rep.output_dim, n_out, seed=seed + 1, bias=bias))


ZOO = ["identity", "relu", "tanh", "mixed"]


def random_target(model, loss, rng):
    if loss is CE:
        return int(rng.integers(model.n_outputs))
    return rng.normal(size=model.n_outputs)


def pre_activations(rep, x):
    out, a = [], np.asarray(x, dtype=np.float64)
    for layer in rep.layers:
        z = layer.weight @ a + layer.bias
        out.append((layer.activation, z))
        a = np.maximum(z, 0) if layer.activation == "relu" else (np.tanh(z) if layer.activation == "tanh" else z)
    return out


def near_kink(model, x, y=None, loss=None):
    """True when a ReLU pre-activation or the Euclidean residual is within KINK_RADIUS of zero."""
    for act, z in pre_activations(model.rep, x):
        if act == "relu" and np.min(np.abs(z)) < KINK_RADIUS:
            return True
    if loss is EUCLIDEAN:
        from robust_transfer.model import model_forward
        return np.linalg.norm(model_forward(model, x) - y) < KINK_RADIUS
    return False


def rel_err(a, b):
    a, b = np.asarray(a).ravel(), np.asarray(b).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return float(np.linalg.norm(a - b) / scale)


def linear_model(W, bias=None):
    """Identity representation followed by the head ``W``."""
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    return ComposedModel(identity_representation(W.shape[1]), LinearHead(W, bias))
