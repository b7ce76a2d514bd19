"""Command line: gen-data, train, eval, corrupt-eval, ablate, plot.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric divergence.
"""

import argparse
import csv
import os
import sys

from .checkpoint import CheckpointError, load_model, save_model
from .config import ConfigError, RunConfig, apply_overrides, load_config
from .corruption import KINDS, CorruptionSpec, corrupt_dataset
from .data import DataFormatError, PhaseModel, generate_dataset, save_dataset
from .metrics import evaluate_sequences, report_rows_to_csv
from .plot import plot_report, plot_ribbons, write_predictions
from .tensor import NumericDomainError
from .train import GRIDS, DivergenceError, ablate, evaluate, load_data, predict_labels, robustness_sweep, train

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _config(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    cfg = apply_overrides(cfg, getattr(args, "set", None))
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg.validate()


def _out_dir(args, cfg):
    out = args.out or cfg.out
    os.makedirs(out, exist_ok=True)
    return out


def _spec(text):
    try:
        return CorruptionSpec.parse(text)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_gen_data(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    data_seed = args.seed if args.seed is not None else cfg.data_seed
    pm = PhaseModel(n_phases=cfg.n_classes, seq_len=cfg.seq_len)
    train_set, test_set = generate_dataset(data_seed, cfg.n_train, cfg.n_test, pm)
    save_dataset(os.path.join(out, "train.grd"), train_set)
    save_dataset(os.path.join(out, "test.grd"), test_set)
    print(f"wrote {len(train_set)} train / {len(test_set)} test sequences to {out}")


def cmd_train(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    data = load_data(cfg)

    def show(entry):
        val = "-" if entry["val_acc"] is None else f"{entry['val_acc']:.2f}"
        print(f"{entry['stage']:>8} epoch {entry['epoch']:3d}  loss {entry['train_loss']:.5f}  val_acc {val}",
              flush=True)

    result = train(cfg, data, progress=show)
    ckpt = args.checkpoint or os.path.join(out, "model.ckpt")
    save_model(ckpt, result.model)
    with open(os.path.join(out, "train_log.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("stage", "epoch", "train_loss", "val_acc", "disc_loss"))
        for e in result.log:
            w.writerow((e["stage"], e["epoch"], repr(e["train_loss"]),
                        "" if e["val_acc"] is None else repr(e["val_acc"]), repr(e.get("disc_loss", ""))))
    print(f"checkpoint: {ckpt}")


def _load(args):
    if not args.checkpoint:
        raise ConfigError("--checkpoint is required")
    cfg = _config(args) if args.config else None
    model = load_model(args.checkpoint, cfg)
    if cfg is None:
        model.cfg = apply_overrides(model.cfg, args.set)
    return model


def cmd_eval(args):
    model = _load(args)
    cfg = model.cfg
    out = _out_dir(args, cfg)
    _, test_set = load_data(cfg)
    spec = _spec(args.corruption) if args.corruption else None
    seqs = corrupt_dataset(test_set, spec, cfg.seed) if spec else test_set
    preds = [predict_labels(model, s) for s in seqs]
    rep = evaluate_sequences(preds, [s.labels for s in seqs])
    label = spec.kind if spec else "none"
    sev = spec.severity if spec else 0
    with open(os.path.join(out, "metrics.csv"), "w", newline="") as fh:
        report_rows_to_csv([("model", label, sev, rep)], fh)
    dump = [("truth", k, s.labels) for k, s in enumerate(seqs)] + [("model", k, p) for k, p in enumerate(preds)]
    write_predictions(os.path.join(out, "predictions.csv"), dump)
    for flag in rep.flags:
        print(f"note: {flag}")
    print(f"acc {rep.acc:.2f}  edit {rep.edit:.2f}  of1 {rep.of1:.2f}  cf1 {rep.cf1:.2f}")


def cmd_corrupt_eval(args):
    model = _load(args)
    cfg = model.cfg
    out = _out_dir(args, cfg)
    _, test_set = load_data(cfg)
    if args.corruption:
        spec = _spec(args.corruption)
        kinds, severities = (spec.kind,), (spec.severity,)
    else:
        kinds, severities = KINDS, (1, 2, 3, 4, 5)
    rows = [("model", "none", 0, evaluate(model, test_set))]
    rows += robustness_sweep({"model": model}, test_set, kinds, severities, cfg.seed)
    with open(os.path.join(out, "robustness.csv"), "w", newline="") as fh:
        report_rows_to_csv(rows, fh)
    print(f"wrote {len(rows)} rows to {os.path.join(out, 'robustness.csv')}")


def cmd_ablate(args):
    cfg = _config(args)
    out = _out_dir(args, cfg)
    tables = tuple(args.tables.split(",")) if args.tables else tuple(GRIDS)
    for t in tables:
        if t not in GRIDS:
            raise ConfigError(f"unknown ablation table {t!r}; choose from {', '.join(GRIDS)}")
    rows = ablate(cfg, tables, progress=lambda label, rep: print(f"{label}: acc {rep.acc:.2f}", flush=True))
    with open(os.path.join(out, "ablation.csv"), "w", newline="") as fh:
        report_rows_to_csv(rows, fh)


def cmd_plot(args):
    if not args.report and not args.predictions:
        raise ConfigError("plot needs --report and/or --predictions")
    prefix = args.out or "plot"
    parent = os.path.dirname(prefix)
    if parent:
        os.makedirs(parent, exist_ok=True)
    if args.report:
        print(plot_report(args.report, prefix + "_severity.ppm"))
    if args.predictions:
        for p in plot_ribbons(args.predictions, prefix + "_ribbon"):
            print(p)


def build_parser():
    parser = argparse.ArgumentParser(prog="grad-workflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        return p

    common(sub.add_parser("gen-data", help="write train.grd / test.grd")).set_defaults(func=cmd_gen_data)
    p = common(sub.add_parser("train", help="train and save a checkpoint"))
    p.add_argument("--checkpoint", help="checkpoint path (default OUT/model.ckpt)")
    p.set_defaults(func=cmd_train)
    for name, fn in (("eval", cmd_eval), ("corrupt-eval", cmd_corrupt_eval)):
        p = common(sub.add_parser(name))
        p.add_argument("--checkpoint")
        p.add_argument("--corruption", metavar="KIND:SEVERITY")
        p.set_defaults(func=fn)
    p = common(sub.add_parser("ablate", help="train and evaluate ablation grids"))
    p.add_argument("--tables", help=f"comma separated subset of {','.join(GRIDS)}")
    p.set_defaults(func=cmd_ablate)
    p = sub.add_parser("plot", help="render PPM figures")
    p.add_argument("--report", help="report CSV with corrupted rows")
    p.add_argument("--predictions", help="prediction dump from eval")
    p.add_argument("--out", help="output path prefix")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, NumericDomainError, FloatingPointError) as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataFormatError, CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
