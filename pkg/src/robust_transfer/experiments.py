"""Experimental pipelines built from the library: sweeps and transfer comparison.

Each function returns JSON-ready dicts; the CLI only adds file handling.
"""
from dataclasses import replace

from .data import corrupt_gaussian
from .errors import InputError
from .report import audit_report
from .theory import as_score, clean_accuracy, robust_accuracy, robust_accuracy_sweep
from .train import LP, finetune_with_new_head, linear_probe, lp_ft


def _require_classification(ds, what):
    if not ds.is_classification:
        raise InputError(f"{what} needs a classification dataset")


def eps_sweep(model, ds, loss, attack_cfg, epsilons, threads=1, **report_kw):
    """One report per budget; robust accuracy comes from a chained attack and is non-increasing."""
    epsilons = [float(e) for e in epsilons]
    if not epsilons:
        raise InputError("empty epsilon sweep")
    chained = None
    if ds.is_classification:
        chained = robust_accuracy_sweep(model, ds.inputs, ds.labels, attack_cfg, epsilons, threads=threads)
    reports = []
    for k, eps in enumerate(epsilons):
        cfg = replace(attack_cfg, epsilon=eps)
        rep = audit_report(model, ds, loss, cfg, threads=threads, command="sweep", **report_kw)
        if chained is not None:
            rep["metrics"]["robust_acc"] = chained[k]
        rep["attack"]["chained"] = True
        rep["label"] = f"eps={eps:g}"
        reports.append(rep)
    return reports


def severity_sweep(rep, train, test, loss, attack_cfg, train_cfg, severities, threads=1, **report_kw):
    """Linear probe on Gaussian-corrupted training data, audit on equally corrupted test data.

    Train and test noise use seeds ``train_cfg.seed`` and ``train_cfg.seed + 1``.
    """
    reports = []
    for s in severities:
        s = float(s)
        tr = corrupt_gaussian(train, s, seed=train_cfg.seed)
        te = corrupt_gaussian(test, s, seed=train_cfg.seed + 1)
        model = linear_probe(rep, tr.inputs, tr.labels, replace(train_cfg, method=LP, loss=loss),
                             n_outputs=_n_outputs(train))
        r = audit_report(model, te, loss, attack_cfg, threads=threads, command="sweep", **report_kw)
        r["dataset"]["severity"] = s
        r["label"] = f"severity={s:g}"
        reports.append(r)
    return reports


def decay_sweep(rep, train, test, loss, attack_cfg, train_cfg, decays, threads=1, **report_kw):
    """Re-probe the frozen representation for each weight-decay value and audit on ``test``."""
    reports = []
    for lam in decays:
        lam = float(lam)
        model = linear_probe(rep, train.inputs, train.labels,
                             replace(train_cfg, method=LP, loss=loss, weight_decay=lam),
                             n_outputs=_n_outputs(train))
        r = audit_report(model, test, loss, attack_cfg, threads=threads, command="sweep", **report_kw)
        r["model"]["weight_decay"] = lam
        r["label"] = f"decay={lam:g}"
        reports.append(r)
    return reports


def _n_outputs(ds):
    return ds.n_classes if ds.is_classification else ds.labels.shape[1]


def compare_transfer(pretrained, train, test, attack_cfg, train_cfg, finetune_lr0=None, threads=1):
    """Run LP, FT and LP-FT from the same representation under one budget.

    LP trains the head with ``train_cfg.lr0``; FT and the finetuning phase of
    LP-FT use ``finetune_lr0`` (``train_cfg.lr0`` when omitted). AS scores are
    measured on the test inputs; the pre-transfer score is computed once.
    """
    _require_classification(train, "compare-transfer")
    rep = getattr(pretrained, "rep", pretrained)
    k = train.n_classes
    pre_as, _ = as_score(rep, test.inputs, attack_cfg, threads=threads)
    ft_lr = train_cfg.lr0 if finetune_lr0 is None else finetune_lr0
    models = {
        "lp": linear_probe(rep, train.inputs, train.labels, replace(train_cfg, method="lp"), n_outputs=k),
        "ft": finetune_with_new_head(rep, train.inputs, train.labels,
                                     replace(train_cfg, method="ft", lr0=ft_lr), n_outputs=k),
        "lpft": lp_ft(rep, train.inputs, train.labels,
                      replace(train_cfg, method="lpft", finetune_lr0=ft_lr), n_outputs=k),
    }
    methods = {}
    for name, model in models.items():
        score, _ = as_score(model.rep, test.inputs, attack_cfg, threads=threads)
        methods[name] = {
            "clean_acc": clean_accuracy(model, test.inputs, test.labels),
            "robust_acc": robust_accuracy(model, test.inputs, test.labels, attack_cfg, threads=threads),
            "as_score": score,
            "as_changed": score != pre_as,
            "train_steps": model.train_steps,
        }
    return {
        "pre_transfer_as_score": pre_as,
        "budget": {"epochs": train_cfg.epochs, "batch_size": train_cfg.batch_size, "lr0": train_cfg.lr0,
                   "finetune_lr0": ft_lr, "momentum": train_cfg.momentum, "weight_decay": train_cfg.weight_decay},
        "methods": methods,
    }, models
