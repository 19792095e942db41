"""Desk-scale scenarios for the trend criteria, cached per process.

Overlapping blobs (separation 3, spread 1) keep the probe below 100% accuracy,
so losses are not saturated and weight decay and input noise have a visible
effect on the loss gap.
"""
from functools import lru_cache

from robust_transfer.attack import AttackConfig
from robust_transfer.data import gen_blobs, split
from robust_transfer.model import ComposedModel, init_head, random_representation
from robust_transfer.train import TrainConfig, adversarial_pretrain

SEEDS = range(5)
K, D, N_PER_CLASS = 4, 20, 100
SEPARATION, SPREAD = 3.0, 1.0
HIDDEN = [32, 16]
PRETRAIN = dict(epochs=20, batch_size=32, lr0=0.05)
PRETRAIN_ATTACK = AttackConfig(epsilon=0.05, steps=10)
PROBE = TrainConfig(epochs=50, batch_size=32, lr0=0.05)
AUDIT_ATTACK = AttackConfig(epsilon=0.05)
SEVERITIES = (0.0, 0.04, 0.06, 0.10)


@lru_cache(maxsize=None)
def source_task(seed):
    return split(gen_blobs(K, D, N_PER_CLASS, separation=SEPARATION, spread=SPREAD, seed=seed), 0.8, seed=seed)


@lru_cache(maxsize=None)
def shifted_task(seed):
    """A different draw of class directions: same input space, new task."""
    return split(gen_blobs(K, D, N_PER_CLASS, separation=SEPARATION, spread=SPREAD, seed=seed + 1000), 0.8, seed=seed)


@lru_cache(maxsize=None)
def pretrained(seed):
    train, _ = source_task(seed)
    model = ComposedModel(random_representation([D] + HIDDEN, seed=seed), init_head(HIDDEN[-1], K, seed=seed))
    cfg = TrainConfig(method="pretrain", seed=seed, adversarial=PRETRAIN_ATTACK, **PRETRAIN)
    return adversarial_pretrain(model, train.inputs, train.labels, cfg)
