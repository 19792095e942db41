"""Command-line interface: ``robust-transfer <command> [flags]``.

Exit codes: 0 success, 1 usage, 2 I/O or parse error, 3 numeric failure,
4 theory violation.
"""
import argparse
import json
import sys
from dataclasses import replace

import jsonschema

from . import __version__
from .attack import L2, LINF, AttackConfig
from .data import gen_blobs, gen_factor_regression, load_csv, save_csv, split
from .errors import InputError, RobustTransferError, TheoryViolation
from .experiments import compare_transfer, decay_sweep, eps_sweep, severity_sweep
from .losses import get_loss
from .model import ComposedModel, init_head, load_model, random_representation, save_model
from .report import audit_report, render_table, validate_report
from .train import FT, LP, LPFT, METHODS, PRETRAIN_ADV, TrainConfig, adversarial_pretrain, \
    finetune_with_new_head, linear_probe, lp_ft, standard_pretrain

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC, EXIT_THEORY = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _ints(text):
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError("widths must be positive integers")
    return vals


def _range(text):
    vals = _floats(text)
    if len(vals) != 2 or not vals[0] < vals[1]:
        raise argparse.ArgumentTypeError("feature range must be 'lo,hi' with lo < hi")
    return tuple(vals)


def _global_flags(p):
    p.add_argument("--seed", type=int, default=0, help="seed for every random stream (default 0)")
    p.add_argument("--out", help="output path (default: stdout for reports)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for batch attacks")
    p.add_argument("--per-sample", action="store_true", help="include per-sample criterion records")
    p.add_argument("--table", action="store_true", help="print a text table instead of JSON to stdout")


def _attack_flags(p, eps_default=8 / 255):
    p.add_argument("--attack-norm", choices=[LINF, L2], default=LINF)
    p.add_argument("--eps", type=float, default=eps_default)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--rel-step", type=float, default=0.7)
    p.add_argument("--restarts", type=int, default=1)


def _train_flags(p):
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--finetune-lr", type=float, default=None,
                   help="learning rate of finetuning phases (default: --lr)")
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=0.0)


def _report_flags(p):
    p.add_argument("--loss", choices=["ce", "euclid"], help="default: ce for class labels, euclid for targets")
    p.add_argument("--rho", type=float, default=0.05, help="failure probability of the population bound")
    p.add_argument("--c2-safety", type=float, default=1.5, help="C2 = factor x largest observed loss")


def build_parser():
    parser = _Parser(prog="robust-transfer", description="Robustness transfer audits for composed models.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("gen-data", help="write a synthetic dataset as CSV")
    g.add_argument("kind", choices=["blobs", "factors"])
    g.add_argument("--k", type=int, default=3, help="blobs: number of classes")
    g.add_argument("--d", type=int, default=20, help="input dimension")
    g.add_argument("--n", type=int, default=100, help="blobs: points per class; factors: number of points")
    g.add_argument("--separation", type=float, default=8.0)
    g.add_argument("--spread", type=float, default=1.0)
    g.add_argument("--n-factors", type=int, default=4)
    g.add_argument("--target-factor", type=int, default=0)
    g.add_argument("--noise", type=float, default=0.01)
    g.add_argument("--split", type=float, help="also write a train/test split with this train fraction")
    g.add_argument("--test-out", help="test CSV path when --split is given")
    _global_flags(g)

    t = sub.add_parser("train", help="pretrain, linear-probe or finetune a model")
    t.add_argument("--method", choices=list(METHODS), required=True)
    t.add_argument("--data", required=True, help="training CSV")
    t.add_argument("--rep-model", help="pretrained model whose representation is transferred (lp/ft/lpft)")
    t.add_argument("--arch", type=_ints, default=[32, 16], help="pretrain: hidden widths, e.g. 32,16")
    t.add_argument("--activation", choices=["relu", "tanh", "identity"], default="relu")
    t.add_argument("--adv-eps", type=float, default=0.0, help="pretrain: adversarial budget (0 = clean training)")
    t.add_argument("--loss", choices=["ce", "euclid"])
    t.add_argument("--log", help="training log path (default: <out>.log.json)")
    _train_flags(t)
    _attack_flags(t)
    _global_flags(t)

    a = sub.add_parser("audit", help="evaluate bounds, criterion and accuracies of a model")
    a.add_argument("--model", required=True)
    a.add_argument("--data", required=True)
    _attack_flags(a)
    _report_flags(a)
    _global_flags(a)

    s = sub.add_parser("sweep", help="audits along one axis: budget, shift severity or weight decay")
    s.add_argument("--model", required=True, help="model to audit (eps) or whose representation is probed")
    s.add_argument("--data", required=True)
    s.add_argument("--test-data", help="held-out CSV for re-probing sweeps (default: 80-20 split of --data)")
    s.add_argument("--sweep-eps", type=_floats)
    s.add_argument("--sweep-severity", type=_floats)
    s.add_argument("--sweep-decay", type=_floats)
    s.add_argument("--feature-range", type=_range, default=(0.0, 1.0),
                   help="clamp range for corrupted features (default 0,1)")
    _train_flags(s)
    _attack_flags(s)
    _report_flags(s)
    _global_flags(s)

    c = sub.add_parser("compare-transfer", help="LP vs FT vs LP-FT from one pretrained representation")
    c.add_argument("--model", required=True, help="pretrained model")
    c.add_argument("--data", required=True, help="downstream CSV")
    c.add_argument("--test-data", help="held-out CSV (default: 80-20 split of --data)")
    _train_flags(c)
    _attack_flags(c)
    _global_flags(c)
    return parser


# -- helpers -----------------------------------------------------------------

def _attack_config(args):
    return AttackConfig(norm=args.attack_norm, epsilon=args.eps, steps=args.steps,
                        relative_step_size=args.rel_step, restarts=args.restarts, seed=args.seed)


def _loss_for(args, ds):
    name = args.loss or ("ce" if ds.is_classification else "euclid")
    loss = get_loss(name)
    if loss.is_classification != ds.is_classification:
        raise InputError(f"loss '{name}' does not match a {'classification' if ds.is_classification else 'regression'} dataset")
    return loss


def _train_config(args, method, loss, adversarial=None):
    return TrainConfig(method=method, epochs=args.epochs, batch_size=args.batch_size, lr0=args.lr,
                       momentum=args.momentum, weight_decay=args.weight_decay, loss=loss,
                       adversarial=adversarial, seed=args.seed, finetune_lr0=args.finetune_lr)


def _check_dims(model, ds, path):
    if model.input_dim != ds.dim:
        raise InputError(f"model expects {model.input_dim} features but {path} has {ds.dim}")


def _emit(payload, args, table=None):
    text = json.dumps(payload, indent=1, allow_nan=False)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text + "\n")
    if args.table and table is not None:
        print(table)
    elif not args.out:
        print(text)


def _validated(reports):
    for r in reports if isinstance(reports, list) else [reports]:
        validate_report(r)
    return reports


def _train_test(args, feature_range=None):
    ds = load_csv(args.data, feature_range=feature_range)
    if args.test_data:
        return ds, load_csv(args.test_data, feature_range=feature_range)
    return split(ds, 0.8, seed=args.seed)


# -- commands ----------------------------------------------------------------

def cmd_gen_data(args):
    if args.kind == "blobs":
        ds = gen_blobs(args.k, args.d, args.n, separation=args.separation, spread=args.spread, seed=args.seed)
    else:
        ds = gen_factor_regression(args.d, args.n, args.n_factors, args.target_factor, seed=args.seed, noise=args.noise)
    if not args.out:
        raise UsageError("gen-data needs --out")
    if args.split is not None:
        if not args.test_out:
            raise UsageError("--split needs --test-out")
        train, test = split(ds, args.split, seed=args.seed)
        save_csv(train, args.out)
        save_csv(test, args.test_out)
        print(f"wrote {len(train)} rows to {args.out} and {len(test)} rows to {args.test_out}")
    else:
        save_csv(ds, args.out)
        print(f"wrote {len(ds)} rows x {ds.dim} features to {args.out}")


def cmd_train(args):
    if not args.out:
        raise UsageError("train needs --out")
    ds = load_csv(args.data)
    loss = _loss_for(args, ds)
    n_out = ds.n_classes if ds.is_classification else ds.labels.shape[1]
    history = []
    if args.method == PRETRAIN_ADV:
        if args.rep_model:
            raise UsageError("--rep-model is not used with --method pretrain")
        rep = random_representation([ds.dim] + args.arch, args.activation, seed=args.seed)
        model = ComposedModel(rep, init_head(rep.output_dim, n_out, seed=args.seed))
        if args.adv_eps > 0:
            adv = replace(_attack_config(args), epsilon=args.adv_eps)
            model = adversarial_pretrain(model, ds.inputs, ds.labels, _train_config(args, args.method, loss, adv), history)
        else:
            model = standard_pretrain(model, ds.inputs, ds.labels, _train_config(args, args.method, loss), history)
    else:
        if not args.rep_model:
            raise UsageError(f"--method {args.method} needs --rep-model")
        if args.adv_eps:
            raise UsageError("--adv-eps only applies to --method pretrain")
        pre = load_model(args.rep_model)
        _check_dims(pre, ds, args.data)
        cfg = _train_config(args, args.method, loss)
        if args.method == LP:
            model = linear_probe(pre.rep, ds.inputs, ds.labels, cfg, n_outputs=n_out, history=history)
        elif args.method == FT:
            model = finetune_with_new_head(pre.rep, ds.inputs, ds.labels, cfg, n_outputs=n_out, history=history)
        else:
            model = lp_ft(pre.rep, ds.inputs, ds.labels, cfg, n_outputs=n_out, history=history)
    save_model(model, args.out)
    log = {"tool_version": __version__, "method": args.method, "seed": args.seed, "data": args.data,
           "loss": loss.tag, "train_steps": model.train_steps, "epochs": history}
    with open(args.log or args.out + ".log.json", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(log, indent=1, allow_nan=False) + "\n")
    print(f"wrote model to {args.out} ({model.train_steps} steps)", file=sys.stderr)


def cmd_audit(args):
    model = load_model(args.model)
    ds = load_csv(args.data)
    _check_dims(model, ds, args.data)
    loss = _loss_for(args, ds)
    report = audit_report(model, ds, loss, _attack_config(args), rho=args.rho, c2_safety=args.c2_safety,
                          per_sample=args.per_sample, threads=args.threads, seed=args.seed)
    _emit(_validated(report), args, render_table(report))


def cmd_sweep(args):
    axes = [n for n in ("sweep_eps", "sweep_severity", "sweep_decay") if getattr(args, n) is not None]
    if len(axes) != 1:
        raise UsageError("sweep needs exactly one of --sweep-eps, --sweep-severity, --sweep-decay")
    model = load_model(args.model)
    kw = dict(rho=args.rho, c2_safety=args.c2_safety, per_sample=args.per_sample, seed=args.seed)
    attack = _attack_config(args)
    if args.sweep_eps is not None:
        ds = load_csv(args.data)
        _check_dims(model, ds, args.data)
        reports = eps_sweep(model, ds, _loss_for(args, ds), attack, args.sweep_eps, threads=args.threads, **kw)
    else:
        train, test = _train_test(args, args.feature_range)
        _check_dims(model, train, args.data)
        loss = _loss_for(args, train)
        cfg = _train_config(args, LP, loss)
        if args.sweep_severity is not None:
            _check_range(train, args.feature_range)
            _check_range(test, args.feature_range)
            reports = severity_sweep(model.rep, train, test, loss, attack, cfg, args.sweep_severity,
                                     threads=args.threads, **kw)
        else:
            reports = decay_sweep(model.rep, train, test, loss, attack, cfg, args.sweep_decay,
                                  threads=args.threads, **kw)
    _emit(_validated(reports), args, render_table(reports))


def _check_range(ds, feature_range):
    lo, hi = feature_range
    if ds.inputs.min() < lo or ds.inputs.max() > hi:
        raise InputError(f"features of {ds.name} fall outside --feature-range {lo:g},{hi:g}")


def cmd_compare_transfer(args):
    pre = load_model(args.model)
    train, test = _train_test(args)
    _check_dims(pre, train, args.data)
    if not train.is_classification:
        raise InputError("compare-transfer needs a classification dataset")
    cfg = _train_config(args, LPFT, get_loss("ce"))
    result, _ = compare_transfer(pre, train, test, _attack_config(args), cfg,
                                 finetune_lr0=args.finetune_lr, threads=args.threads)
    result = {"tool_version": __version__, "run": {"command": "compare-transfer", "seed": args.seed},
              "attack": {"norm": args.attack_norm, "epsilon": args.eps, "steps": args.steps,
                         "relative_step_size": args.rel_step, "restarts": args.restarts}, **result}
    _emit(result, args, _transfer_table(result))


def _transfer_table(result):
    lines = [f"pre-transfer AS score: {result['pre_transfer_as_score']:.4g}",
             f"{'method':<8}{'Acc':>8}{'RAcc':>8}{'AS':>10}"]
    for name, row in result["methods"].items():
        lines.append(f"{name.upper():<8}{100 * row['clean_acc']:>7.1f}%{100 * row['robust_acc']:>7.1f}%{row['as_score']:>10.4g}")
    return "\n".join(lines)


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "audit": cmd_audit,
            "sweep": cmd_sweep, "compare-transfer": cmd_compare_transfer}


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "threads", 1) < 1:
            raise UsageError("--threads must be at least 1")
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TheoryViolation as exc:
        print(f"theory violation: {exc}", file=sys.stderr)
        print(json.dumps(exc.diagnostics[:20], indent=1), file=sys.stderr)
        return EXIT_THEORY
    except RobustTransferError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except jsonschema.ValidationError as exc:
        print(f"internal error: report does not match its schema: {exc.message}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # e.g. non-finite values refused by the JSON encoder
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
