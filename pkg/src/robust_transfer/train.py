"""Training protocols: adversarial pretraining, linear probing (LP), full
finetuning (FT) and LP followed by FT (LP-FT).

All protocols share one loop: SGD with momentum, a per-step cosine-annealed
learning rate, and L2 decay on weight matrices (never on biases). Batches are
a seeded permutation per epoch with the last partial batch kept.
"""
import copy
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ._rng import stream
from .attack import AttackConfig, batch_attack
from .errors import InputError, NumericError
from .losses import CE, LossKind
from .model import ComposedModel, init_head, param_gradients

PRETRAIN_ADV = "pretrain"
LP = "lp"
FT = "ft"
LPFT = "lpft"
METHODS = (PRETRAIN_ADV, LP, FT, LPFT)


@dataclass(frozen=True)
class TrainConfig:
    method: str = LP
    epochs: int = 20
    batch_size: int = 128
    lr0: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0
    loss: LossKind = CE
    adversarial: Optional[AttackConfig] = None
    seed: int = 0
    finetune_lr0: Optional[float] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise InputError(f"unknown training method {self.method!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise InputError("epochs must be >= 0 and batch_size >= 1")
        if self.lr0 < 0 or not 0 <= self.momentum < 1 or self.weight_decay < 0:
            raise InputError("need lr0 >= 0, momentum in [0, 1) and weight_decay >= 0")


def cosine_lr(lr0, t, total):
    if total < 1:
        raise InputError("total steps must be at least 1")
    if not 0 <= t <= total:
        raise InputError(f"step {t} outside [0, {total}]")
    return lr0 * (1.0 + math.cos(math.pi * t / total)) / 2.0


def sgd_step(params, grads, velocity, lr, momentum, weight_decay, decay_mask=None):
    """In-place SGD-with-momentum update.

    ``v <- momentum * v + grad + weight_decay * p`` (decay only where
    ``decay_mask`` is true), then ``p <- p - lr * v``.
    """
    if not (len(params) == len(grads) == len(velocity)):
        raise InputError("params, grads and velocity must have the same length")
    if decay_mask is None:
        decay_mask = [True] * len(params)
    for p, g, v, decay in zip(params, grads, velocity, decay_mask):
        if p.shape != g.shape or p.shape != v.shape:
            raise InputError(f"shape mismatch in sgd_step: {p.shape}, {g.shape}, {v.shape}")
        v *= momentum
        v += g
        if decay and weight_decay:
            v += weight_decay * p
        p -= lr * v
    return params, velocity


def _n_batches(n, batch_size):
    return -(-n // batch_size)


def _run(model, X, Y, cfg, *, epochs, lr0, head_only, phase, history, attack=None):
    """Shared training loop; mutates ``model`` in place and returns the step count."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y)
    n = X.shape[0]
    if n == 0:
        raise InputError("training set is empty")
    per_epoch = _n_batches(n, cfg.batch_size)
    total = max(epochs * per_epoch, 1)
    params = model.parameters()
    velocity = [np.zeros_like(p) for p in params]
    rep_mask = model.rep_mask()
    weights = model.weight_mask()
    # LP decays only the head weight matrix; FT decays every weight matrix
    decay_mask = [w and not (head_only and r) for w, r in zip(weights, rep_mask)]
    model.freeze_rep = head_only
    t = 0
    for epoch in range(epochs):
        order = stream(cfg.seed, "shuffle", phase, epoch).permutation(n)
        losses_seen = []
        for b in range(per_epoch):
            idx = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            xb, yb = X[idx], Y[idx]
            if attack is not None:
                acfg = replace(attack.on_loss(cfg.loss), seed=int(stream(cfg.seed, "attack", phase, epoch, b).integers(2**32)))
                xb = np.stack([r.x_adv for r in batch_attack(model, xb, yb, acfg)])
            pg = param_gradients(model, cfg.loss, xb, yb)
            if not math.isfinite(pg.loss):
                raise NumericError(f"training loss diverged in epoch {epoch}")
            lr = cosine_lr(lr0, t, total)
            sgd_step(params, pg.grads, velocity, lr, cfg.momentum, cfg.weight_decay, decay_mask)
            losses_seen.append(pg.loss)
            t += 1
        mean_loss = math.fsum(losses_seen) / len(losses_seen)
        if not math.isfinite(mean_loss):
            raise NumericError(f"training loss diverged in epoch {epoch}")
        if history is not None:
            history.append({"phase": phase_name(phase), "epoch": epoch, "loss": mean_loss,
                            "lr_end": cosine_lr(lr0, t, total), "steps": t})
    model.freeze_rep = False
    return t


_PHASES = {0: "pretrain", 1: "lp", 2: "ft"}


def phase_name(phase):
    return _PHASES[phase]


def adversarial_pretrain(model, X, Y, cfg, history=None):
    """Train every parameter on PGD adversarial examples of each minibatch."""
    if cfg.adversarial is None:
        raise InputError("adversarial pretraining needs cfg.adversarial")
    model = model.copy()
    steps = _run(model, X, Y, cfg, epochs=cfg.epochs, lr0=cfg.lr0, head_only=False,
                 phase=0, history=history, attack=cfg.adversarial)
    model.train_steps = steps
    return model


def standard_pretrain(model, X, Y, cfg, history=None):
    """Same schedule and shuffling as :func:`adversarial_pretrain`, on clean inputs."""
    model = model.copy()
    model.train_steps = _run(model, X, Y, cfg, epochs=cfg.epochs, lr0=cfg.lr0, head_only=False,
                             phase=0, history=history)
    return model


def linear_probe(rep, X, Y, cfg, n_outputs=None, bias=True, history=None):
    """Fit a fresh linear head on frozen features; returns the composed model.

    The head starts uniform in ``[-1/sqrt(r), 1/sqrt(r)]`` and the
    representation is never modified.
    """
    rep = getattr(rep, "rep", rep)
    Y = np.asarray(Y)
    if n_outputs is None:
        n_outputs = int(Y.max()) + 1 if cfg.loss.is_classification else Y.reshape(len(Y), -1).shape[1]
    head = init_head(rep.output_dim, n_outputs, seed=cfg.seed, bias=bias)
    model = ComposedModel(copy.deepcopy(rep), head)
    steps = _run(model, X, Y, cfg, epochs=cfg.epochs, lr0=cfg.lr0, head_only=True, phase=1, history=history)
    model.train_steps = steps
    return model


def full_finetune(model, X, Y, cfg, epochs=None, lr0=None, history=None):
    """Update all parameters of ``model`` (a copy is returned)."""
    model = model.copy()
    steps = _run(model, X, Y, cfg, epochs=cfg.epochs if epochs is None else epochs,
                 lr0=cfg.lr0 if lr0 is None else lr0, head_only=False, phase=2, history=history)
    model.train_steps = steps
    return model


def lp_ft(rep, X, Y, cfg, n_outputs=None, history=None):
    """Linear probing for ``cfg.epochs``, then finetuning for ``ceil(epochs / 2)``."""
    probed = linear_probe(rep, X, Y, cfg, n_outputs=n_outputs, history=history)
    lp_steps = probed.train_steps
    ft_lr = cfg.lr0 if cfg.finetune_lr0 is None else cfg.finetune_lr0
    tuned = full_finetune(probed, X, Y, cfg, epochs=math.ceil(cfg.epochs / 2), lr0=ft_lr, history=history)
    tuned.train_steps = lp_steps + tuned.train_steps
    return tuned


def finetune_with_new_head(rep, X, Y, cfg, n_outputs=None, history=None):
    """FT from a pretrained representation: fresh head, all parameters trained."""
    rep = getattr(rep, "rep", rep)
    Y = np.asarray(Y)
    if n_outputs is None:
        n_outputs = int(Y.max()) + 1 if cfg.loss.is_classification else Y.reshape(len(Y), -1).shape[1]
    model = ComposedModel(copy.deepcopy(rep), init_head(rep.output_dim, n_outputs, seed=cfg.seed))
    return full_finetune(model, X, Y, cfg, history=history)
