"""Quantities of the representation-robustness bounds.

* ``l_alpha``: the weight-matrix functional paired with the loss-Lipschitz norm.
* ``as_score``: adversarial sensitivity of a representation, the mean over a
  dataset of the largest displacement ``||g(x + delta) - g(x)||_2`` found by PGD.
* ``lemma1_audit``: the finite-sample loss-gap bound
  ``(adv_loss - clean_loss) / (L_alpha(W) C) <= AS score``.
* ``hoeffding_term`` / ``theorem1_rhs``: the population version of that bound.
* ``criterion_margin`` / ``criterion_check``: the per-point robust
  classification criterion ``sensitivity <= min_j |f_y - f_j| / ||W_y - W_j||``.

All maxima over the ball are estimated by PGD, so sensitivities are lower
bounds of the true maxima. To keep the proven inequalities checkable on
estimated values, the representation attack used inside an audit is
warm-started from the adversarial point found by the loss attack; the
sensitivity it reports is then at least the displacement produced by that
point, which is what the inequalities need.
"""
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .attack import MAX_REP_DISTANCE, batch_attack
from .errors import DegenerateMarginError, InputError, TheoryViolation
from .losses import CE
from .model import model_forward
from .numcore import as_matrix, spectral_norm

VIOLATION_SLACK = 1e-9


def _mean(values):
    # fsum is exactly rounded, so the mean does not depend on summation order
    values = list(values)
    return math.fsum(values) / len(values) if values else 0.0


def _alpha(alpha):
    if alpha in ("inf", "Inf", "linf") or alpha == math.inf:
        return math.inf
    alpha = float(alpha)
    if alpha not in (1.0, 2.0):
        raise InputError(f"alpha must be 1, 2 or inf, got {alpha}")
    return alpha


def l_alpha(W, alpha):
    W = as_matrix(W, "W")
    alpha = _alpha(alpha)
    if alpha == 2.0:
        return spectral_norm(W)
    row_norms = np.linalg.norm(W, axis=1)
    if alpha == 1.0:
        return math.fsum(row_norms)
    return float(row_norms.max())


def _rep_config(config):
    if config.objective != MAX_REP_DISTANCE:
        config = config.on_representation()
    return config


def as_score(rep, X, config, threads=1):
    """Adversarial sensitivity score of ``rep`` on unlabeled inputs ``X``.

    Returns ``(score, per_sample)``.
    """
    rep = getattr(rep, "rep", rep)
    results = batch_attack(rep, X, None, _rep_config(config), threads=threads)
    per_sample = np.array([r.objective_value for r in results])
    return _mean(per_sample), per_sample


@dataclass
class LemmaOneAudit:
    clean_loss_avg: float
    adv_loss_avg: float
    diff: float
    lipschitz_C: float
    l_alpha: float
    lhs: float
    as_score: float
    per_sample_sensitivities: np.ndarray = field(repr=False)
    per_sample_clean: np.ndarray = field(repr=False)
    per_sample_adv: np.ndarray = field(repr=False)

    @property
    def n(self):
        return len(self.per_sample_sensitivities)

    @property
    def rhs(self):
        return self.as_score

    def subset(self, idx):
        """The audit restricted to the samples ``idx`` (no new attacks are run)."""
        idx = np.asarray(idx)
        return _assemble(self.per_sample_clean[idx], self.per_sample_adv[idx],
                         self.per_sample_sensitivities[idx], self.lipschitz_C, self.l_alpha)


def _assemble(clean, adv, sens, C, la):
    clean_avg, adv_avg = _mean(clean), _mean(adv)
    diff = adv_avg - clean_avg
    scale = la * C
    if scale == 0.0:
        lhs = 0.0 if diff <= 0.0 else math.inf
    else:
        lhs = diff / scale
    return LemmaOneAudit(clean_avg, adv_avg, diff, C, la, lhs, _mean(sens), sens, clean, adv)


def lemma1_audit(model, X, Y, loss, config, threads=1, check=True):
    """Run both attacks and evaluate the finite-sample bound on ``(X, Y)``.

    The loss attack maximizes ``loss`` on the composed model; the
    representation attack maximizes displacement of ``g`` and is warm-started
    at each sample's loss-attack perturbation. Raises :class:`TheoryViolation`
    when ``lhs > as_score + 1e-9``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    loss_cfg = config.on_loss(loss)
    adv = batch_attack(model, X, Y, loss_cfg, threads=threads)
    clean = np.array([loss.value(model_forward(model, x), y) for x, y in zip(X, Y)])
    adv_vals = np.array([r.objective_value for r in adv])
    rep_res = batch_attack(model.rep, X, None, _rep_config(config),
                           warm_starts=[r.delta for r in adv], threads=threads)
    sens = np.array([r.objective_value for r in rep_res])
    la = l_alpha(model.head.weight, loss.lipschitz_norm)
    audit = _assemble(clean, adv_vals, sens, loss.lipschitz_constant, la)
    if check:
        check_lemma1(audit)
    return audit


def check_lemma1(audit):
    if audit.lhs <= audit.as_score + VIOLATION_SLACK:
        return audit
    scale = audit.l_alpha * audit.lipschitz_C
    diagnostics = []
    for i, (c, a, s) in enumerate(zip(audit.per_sample_clean, audit.per_sample_adv, audit.per_sample_sensitivities)):
        if (a - c) > scale * s + VIOLATION_SLACK:
            diagnostics.append({"sample": i, "clean_loss": float(c), "adv_loss": float(a),
                                "sensitivity": float(s), "bound": float(scale * s)})
    raise TheoryViolation(
        f"loss-gap bound violated: lhs {audit.lhs:.12g} > AS score {audit.as_score:.12g}",
        diagnostics,
    )


@dataclass(frozen=True)
class HoeffdingTerm:
    C2: float
    n: int
    rho: float
    value: float


def hoeffding_term(C2, n, rho):
    if not C2 > 0:
        raise InputError("C2 must be positive")
    if int(n) != n or n < 1:
        raise InputError("n must be a positive integer")
    if not 0 < rho < 1:
        raise InputError("rho must lie strictly between 0 and 1")
    value = C2 * math.sqrt(math.log(rho / 2.0) / (-2.0 * n))
    return HoeffdingTerm(float(C2), int(n), float(rho), value)


def theorem1_rhs(audit, hoeffding):
    if audit.n != hoeffding.n:
        raise InputError(f"audit covers {audit.n} samples but the Hoeffding term assumes {hoeffding.n}")
    return audit.l_alpha * audit.lipschitz_C * audit.as_score + hoeffding.value


def empirical_c2(audit, safety=1.5):
    """Loss bound used for the Hoeffding term: ``safety`` times the largest observed loss."""
    top = max(float(np.max(audit.per_sample_adv)), float(np.max(audit.per_sample_clean)))
    return safety * top if top > 0 else safety


def criterion_margin(model, x):
    """Predicted class and normalized logit margin ``min_j |f_y - f_j| / ||W_y - W_j||_2``."""
    if model.n_outputs < 2:
        raise InputError("the robustness criterion needs a classifier with at least two classes")
    logits = model_forward(model, x)
    y = int(np.argmax(logits))
    W = model.head.weight
    margin = math.inf
    for j in range(len(logits)):
        if j == y:
            continue
        gap = abs(logits[y] - logits[j])
        row = float(np.linalg.norm(W[y] - W[j]))
        if row == 0.0:
            if gap == 0.0:
                return y, 0.0
            raise DegenerateMarginError(f"head rows {y} and {j} coincide but their logits differ (bias-only separation)")
        margin = min(margin, gap / row)
    return y, margin


@dataclass
class CriterionRecord:
    sample_index: int
    predicted_class: int
    margin: float
    sensitivity: float
    fulfilled: bool
    robust_under_attack: bool
    correct: Optional[bool]
    certified: bool = False

    def to_dict(self):
        return {
            "sample_index": self.sample_index,
            "predicted_class": self.predicted_class,
            "margin": self.margin,
            "sensitivity": self.sensitivity,
            "fulfilled": self.fulfilled,
            "robust_under_attack": self.robust_under_attack,
            "correct": self.correct,
            "certified": self.certified,
        }


def criterion_check(model, x, y_true=None, config=None, loss=None, sample_index=0):
    """Evaluate the robust-classification criterion at a single point."""
    return criterion_records(model, np.atleast_2d(x), None if y_true is None else [y_true],
                             config, loss, index_offset=sample_index)[0]


def criterion_records(model, X, y_true, config, loss=None, threads=1, index_offset=0):
    """Criterion records for every row of ``X``.

    The robustness probe attacks the cross-entropy of the predicted class;
    the sensitivity attack on ``g`` uses the same norm and epsilon and is
    warm-started at the probe's perturbation.
    """
    if config is None:
        raise InputError("criterion evaluation needs an attack configuration")
    loss = loss or CE
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    margins = [criterion_margin(model, x) for x in X]
    preds = [m[0] for m in margins]
    probe = batch_attack(model, X, preds, config.on_loss(loss), threads=threads)
    rep_res = batch_attack(model.rep, X, None, _rep_config(config),
                           warm_starts=[r.delta for r in probe], threads=threads)
    records = []
    for i, ((y, margin), pr, rr) in enumerate(zip(margins, probe, rep_res)):
        adv_pred = int(np.argmax(model_forward(model, pr.x_adv)))
        sens = rr.objective_value
        records.append(CriterionRecord(
            sample_index=index_offset + i,
            predicted_class=y,
            margin=float(margin),
            sensitivity=float(sens),
            fulfilled=bool(sens <= margin),
            robust_under_attack=adv_pred == y,
            correct=None if y_true is None else bool(y == int(y_true[i])),
        ))
    return records


def criterion_summary(records):
    """``prop_fulfilled``, ``rob_fulfilled`` (None when nothing is fulfilled) and counts."""
    n = len(records)
    fulfilled = [r for r in records if r.fulfilled]
    rob = sum(r.robust_under_attack for r in fulfilled) / len(fulfilled) if fulfilled else None
    return {
        "prop_fulfilled": len(fulfilled) / n if n else 0.0,
        "rob_fulfilled": rob,
        "n_evaluated": n,
        "n_fulfilled": len(fulfilled),
    }


def robust_accuracy(model, X, y, config, loss=None, threads=1):
    """Fraction of points predicted correctly both before and after a loss attack."""
    return robust_accuracy_sweep(model, X, y, config, [config.epsilon], loss, threads)[0]


def robust_accuracy_sweep(model, X, y, config, epsilons, loss=None, threads=1):
    """Robust accuracy at increasing budgets with warm-start chaining.

    The attack at each budget starts from the previous budget's solution, and
    a point broken at a smaller budget stays broken: its earlier adversarial
    example is still feasible. The returned sequence is therefore
    non-increasing.
    """
    loss = loss or CE
    epsilons = [float(e) for e in epsilons]
    if any(b < a for a, b in zip(epsilons, epsilons[1:])):
        raise InputError("epsilon sweep must be non-decreasing")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y).astype(np.int64)
    clean_pred = np.argmax(np.atleast_2d(model_forward(model, X)), axis=1)
    intact = clean_pred == y
    warm = None
    out = []
    for eps in epsilons:
        cfg = replace(config.on_loss(loss), epsilon=eps)
        res = batch_attack(model, X, y, cfg, warm_starts=warm, threads=threads)
        adv_pred = np.array([int(np.argmax(model_forward(model, r.x_adv))) for r in res])
        intact = intact & (adv_pred == clean_pred)
        out.append(float(intact.mean()))
        warm = [r.delta for r in res]
    return out


def clean_accuracy(model, X, y):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    pred = np.argmax(np.atleast_2d(model_forward(model, X)), axis=1)
    return float(np.mean(pred == np.asarray(y).astype(np.int64)))


def relative_diff(clean_ce, robust_ce):
    """``(robust - clean) / clean``; positive when the attack raises the loss."""
    if not clean_ce > 0:
        raise InputError("clean loss must be positive")
    return (robust_ce - clean_ce) / clean_ce
