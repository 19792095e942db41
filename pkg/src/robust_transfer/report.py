"""Audit reports: assembly, JSON-schema validation and text tables."""
import json
import math
from datetime import datetime, timezone
from importlib import resources

import jsonschema
import numpy as np

from . import __version__
from .errors import NumericError
from .theory import (
    clean_accuracy,
    criterion_records,
    criterion_summary,
    empirical_c2,
    hoeffding_term,
    l_alpha,
    lemma1_audit,
    relative_diff,
    theorem1_rhs,
)

RELATIVE_DIFF_NOTE = ("relative_diff = (robust - clean) / clean, so it is positive when the attack "
                      "raises the loss; this matches published table values rather than the inverted inline formula")
CRITERION_NOTE = ("fulfilled compares a PGD estimate of the representation sensitivity (a lower bound "
                  "of the true maximum) with the margin; it is an empirical check, not a certificate")


def _check_finite(obj, path="metrics"):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{path}.{k}")
    elif isinstance(obj, float) and not math.isfinite(obj):
        raise NumericError(f"report field {path} is not finite ({obj})")


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def load_schema():
    text = resources.files("robust_transfer").joinpath("schemas/audit_report.schema.json").read_text("utf-8")
    return json.loads(text)


def validate_report(report):
    jsonschema.validate(report, load_schema())
    return report


def _alpha_name(alpha):
    return "inf" if alpha == math.inf else str(int(alpha))


def describe_model(model):
    return {
        "input_dim": int(model.input_dim),
        "layer_widths": [int(l.weight.shape[0]) for l in model.rep.layers],
        "activations": [l.activation for l in model.rep.layers],
        "n_outputs": int(model.n_outputs),
        "head_bias": model.head.bias is not None,
    }


def describe_dataset(ds):
    return {
        "name": ds.name,
        "n": len(ds),
        "dim": int(ds.dim),
        "task": "classification" if ds.is_classification else "regression",
        "n_classes": ds.n_classes,
    }


def describe_attack(cfg):
    return {
        "norm": cfg.norm,
        "epsilon": cfg.epsilon,
        "steps": cfg.steps,
        "relative_step_size": cfg.relative_step_size,
        "restarts": cfg.restarts,
        "random_start": cfg.random_start,
        "seed": cfg.seed,
    }


def audit_report(model, ds, loss, attack_cfg, rho=0.05, c2_safety=1.5, per_sample=False,
                 threads=1, seed=None, command="audit", extra=None):
    """Run a full audit of ``model`` on ``ds`` and return the report dict.

    Raises :class:`~robust_transfer.errors.TheoryViolation` when the loss-gap
    bound fails.
    """
    started = _now()
    audit = lemma1_audit(model, ds.inputs, ds.labels, loss, attack_cfg, threads=threads)
    c2 = empirical_c2(audit, c2_safety)
    hoeff = hoeffding_term(c2, audit.n, rho)
    metrics = {
        "clean_loss": audit.clean_loss_avg,
        "adv_loss": audit.adv_loss_avg,
        "diff_loss": audit.diff,
        "clean_acc": None,
        "robust_acc": None,
        "l_alpha": {_alpha_name(a): l_alpha(model.head.weight, a) for a in (1, 2, math.inf)},
        "loss_l_alpha": audit.l_alpha,
        "lemma1_lhs": audit.lhs,
        "as_score": audit.as_score,
        "hoeffding": {"C2": hoeff.C2, "C2_safety_factor": c2_safety, "n": hoeff.n, "rho": hoeff.rho, "value": hoeff.value},
        "theorem1_rhs": theorem1_rhs(audit, hoeff),
        "relative_diff": relative_diff(audit.clean_loss_avg, audit.adv_loss_avg) if audit.clean_loss_avg > 0 else None,
        "criterion": None,
    }
    _check_finite(metrics)
    records = None
    if ds.is_classification and model.n_outputs >= 2:
        records = criterion_records(model, ds.inputs, ds.labels, attack_cfg, threads=threads)
        summary = criterion_summary(records)
        summary["certified"] = False
        metrics["criterion"] = summary
        metrics["clean_acc"] = clean_accuracy(model, ds.inputs, ds.labels)
        metrics["robust_acc"] = float(np.mean([bool(r.correct and r.robust_under_attack) for r in records]))
    report = {
        "tool_version": __version__,
        "run": {"command": command, "seed": seed if seed is not None else attack_cfg.seed,
                "started_at": started, "finished_at": _now()},
        "dataset": describe_dataset(ds),
        "model": describe_model(model),
        "loss": {"name": loss.tag, "lipschitz_constant": loss.lipschitz_constant,
                 "lipschitz_norm": _alpha_name(loss.lipschitz_norm)},
        "attack": describe_attack(attack_cfg),
        "metrics": metrics,
        "notes": [RELATIVE_DIFF_NOTE, CRITERION_NOTE],
    }
    if per_sample and records is not None:
        report["per_sample"] = [r.to_dict() for r in records]
    if extra:
        report.update(extra)
    return report


def strip_timestamps(report):
    """Copy of a report without wall-clock fields, for reproducibility comparisons."""
    if isinstance(report, list):
        return [strip_timestamps(r) for r in report]
    out = json.loads(json.dumps(report))
    if isinstance(out, dict) and "run" in out:
        out["run"].pop("started_at", None)
        out["run"].pop("finished_at", None)
    return out


def _fmt(v, pct=False):
    if v is None:
        return "-"
    if pct:
        return f"{100 * v:.1f}%"
    return f"{v:.4g}"


def render_table(reports):
    """Text table, one row per metric and one column per report."""
    if isinstance(reports, dict):
        reports = [reports]
    rows = [
        ("epsilon", lambda r: _fmt(r["attack"]["epsilon"])),
        ("clean loss", lambda r: _fmt(r["metrics"]["clean_loss"])),
        ("adv. loss", lambda r: _fmt(r["metrics"]["adv_loss"])),
        ("diff. loss", lambda r: _fmt(r["metrics"]["diff_loss"])),
        ("L_inf(W)", lambda r: _fmt(r["metrics"]["l_alpha"]["inf"])),
        ("LHS", lambda r: _fmt(r["metrics"]["lemma1_lhs"])),
        ("AS score", lambda r: _fmt(r["metrics"]["as_score"])),
        ("population RHS", lambda r: _fmt(r["metrics"]["theorem1_rhs"])),
        ("clean accuracy", lambda r: _fmt(r["metrics"]["clean_acc"], True)),
        ("robust accuracy", lambda r: _fmt(r["metrics"]["robust_acc"], True)),
        ("prop. fulfilled", lambda r: _fmt((r["metrics"]["criterion"] or {}).get("prop_fulfilled"), True)),
        ("rob. fulfilled", lambda r: _fmt((r["metrics"]["criterion"] or {}).get("rob_fulfilled"), True)),
    ]
    header = [""] + [r.get("label", r["dataset"]["name"]) for r in reports]
    body = [[name] + [fn(r) for r in reports] for name, fn in rows]
    widths = [max(len(str(row[i])) for row in [header] + body) for i in range(len(header))]
    lines = ["  ".join(str(c).rjust(w) if i else str(c).ljust(w) for i, (c, w) in enumerate(zip(row, widths)))
             for row in [header] + body]
    return "\n".join(lines)
