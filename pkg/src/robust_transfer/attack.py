"""Projected gradient attacks in the L-inf and L2 threat models.

Two objectives are supported: maximize the loss of a composed model
(``max_loss``) or maximize the displacement ``||g(x + delta) - g(x)||_2`` of
a representation (``max_rep_distance``).

Randomness (random starts, the fallback direction at zero displacement) is
drawn from a stream keyed by ``(seed, hash of the clean input)``. Results
therefore do not depend on the order samples are processed in, on thread
count, or on the position of a sample in its dataset.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ._rng import content_key, stream
from .errors import InputError, NumericError, RobustTransferError
from .losses import LossKind
from .model import ComposedModel, MlpRepresentation, loss_value_and_grad, rep_distance_value_and_grad, rep_forward

LINF = "linf"
L2 = "l2"
MAX_LOSS = "max_loss"
MAX_REP_DISTANCE = "max_rep_distance"


@dataclass(frozen=True)
class AttackConfig:
    norm: str = LINF
    epsilon: float = 8 / 255
    steps: int = 20
    relative_step_size: float = 0.7
    restarts: int = 1
    random_start: bool = True
    seed: int = 0
    objective: str = MAX_LOSS
    loss: Optional[LossKind] = None

    def __post_init__(self):
        if self.norm not in (LINF, L2):
            raise InputError(f"attack norm must be '{LINF}' or '{L2}', got {self.norm!r}")
        if not self.epsilon >= 0:
            raise InputError("epsilon must be non-negative")
        if self.steps < 1 or self.restarts < 1:
            raise InputError("steps and restarts must be at least 1")
        if not self.relative_step_size > 0:
            raise InputError("relative_step_size must be positive")
        if self.objective not in (MAX_LOSS, MAX_REP_DISTANCE):
            raise InputError(f"unknown attack objective {self.objective!r}")

    @property
    def step_size(self):
        return self.relative_step_size * self.epsilon

    def on_loss(self, loss):
        return replace(self, objective=MAX_LOSS, loss=loss)

    def on_representation(self):
        return replace(self, objective=MAX_REP_DISTANCE, loss=None)


@dataclass
class AttackResult:
    x_adv: np.ndarray
    delta: np.ndarray
    delta_norm: float
    objective_value: float
    restarts_used: int


def norm_of(delta, norm):
    if norm == LINF:
        return float(np.max(np.abs(delta))) if delta.size else 0.0
    return float(np.linalg.norm(delta))


def project(delta, norm, epsilon):
    """Project onto the closed ``epsilon``-ball of the given norm."""
    if epsilon < 0:
        raise InputError("epsilon must be non-negative")
    delta = np.asarray(delta, dtype=np.float64)
    if norm == LINF:
        return np.clip(delta, -epsilon, epsilon)
    if norm != L2:
        raise InputError(f"unknown norm {norm!r}")
    length = np.linalg.norm(delta)
    if length > epsilon:
        return delta * (epsilon / length)
    return delta.copy()


def _random_in_ball(rng, dim, norm, epsilon):
    if norm == LINF:
        return rng.uniform(-epsilon, epsilon, size=dim)
    direction = rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)
    return project(direction * epsilon * rng.uniform() ** (1.0 / dim), L2, epsilon)


def _objective(target, x, y, config):
    if config.objective == MAX_LOSS:
        if not isinstance(target, ComposedModel):
            raise InputError("a max_loss attack needs a composed model")
        if y is None or config.loss is None:
            raise InputError("a max_loss attack needs a loss and a label")
        return lambda z: loss_value_and_grad(target, config.loss, z, y)
    if y is not None:
        raise InputError("a max_rep_distance attack does not use labels")
    rep = target.rep if isinstance(target, ComposedModel) else target
    if not isinstance(rep, MlpRepresentation):
        raise InputError("a max_rep_distance attack needs a representation")
    anchor = rep_forward(rep, x)
    return lambda z: rep_distance_value_and_grad(rep, anchor, z)


def pgd(target, x, y, config, warm_start=None):
    """Projected gradient ascent on the configured objective.

    Each restart starts from zero (or a uniform draw in the ball when
    ``random_start``) and takes ``config.steps`` steps of size
    ``relative_step_size * epsilon`` along the sign of the gradient (L-inf)
    or the normalized gradient (L2). When ``warm_start`` is given it is run
    first as restart 0. The returned point is the best iterate seen over all
    restarts, starting points included.
    """
    x = np.asarray(x, dtype=np.float64)
    value_and_grad = _objective(target, x, y, config)
    eps = float(config.epsilon)
    if eps == 0.0:
        value, _ = value_and_grad(x)
        return AttackResult(x.copy(), np.zeros_like(x), 0.0, float(value), 0)

    rng = stream(config.seed, "attack", content_key(x))
    starts = []
    if warm_start is not None:
        warm = np.asarray(warm_start, dtype=np.float64)
        if warm.shape != x.shape or norm_of(warm, config.norm) > eps + 1e-9:
            raise InputError("warm_start must lie inside the epsilon-ball")
        starts.append(warm)
    for _ in range(config.restarts):
        starts.append(_random_in_ball(rng, x.size, config.norm, eps) if config.random_start else np.zeros_like(x))

    best_value, best_delta = -np.inf, None
    for delta in starts:
        for step in range(config.steps + 1):
            value, grad = value_and_grad(x + delta)
            if value > best_value:
                best_value, best_delta = value, delta
            if step == config.steps:
                break
            if not np.all(np.isfinite(grad)):
                raise NumericError(f"non-finite gradient at attack step {step}")
            if config.objective == MAX_REP_DISTANCE and value == 0.0:
                # displacement is zero, so the gradient is undefined there
                grad = rng.standard_normal(x.size)
            if config.norm == LINF:
                direction = np.sign(grad)
            else:
                length = np.linalg.norm(grad)
                direction = grad / length if length > 0.0 else grad
            delta = project(delta + config.step_size * direction, config.norm, eps)
    x_adv = x + best_delta
    return AttackResult(x_adv, best_delta, norm_of(best_delta, config.norm), float(best_value), len(starts))


def batch_attack(target, X, labels, config, warm_starts=None, threads=1):
    """Run :func:`pgd` on every row of ``X``; ``labels`` is ignored for representation attacks."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    n = X.shape[0]
    if config.objective == MAX_LOSS:
        if labels is None or len(labels) != n:
            raise InputError("labels must be given for every sample of a max_loss attack")
    if warm_starts is not None and len(warm_starts) != n:
        raise InputError("warm_starts must have one entry per sample")

    def run(i):
        y = labels[i] if config.objective == MAX_LOSS else None
        ws = None if warm_starts is None else warm_starts[i]
        try:
            return pgd(target, X[i], y, config, ws)
        except RobustTransferError as exc:
            raise type(exc)(f"sample {i}: {exc}") from exc

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, range(n)))
    return [run(i) for i in range(n)]
