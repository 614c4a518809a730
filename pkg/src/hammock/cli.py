"""Command line entry point.

Exit codes: 0 success, 2 usage or input error, 3 numeric failure.  Commands
that report an accuracy end with a ``accuracy=<float>`` line on stdout.
"""
import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import _accel
from .binning import fit_binning
from .dataio import SplitSpec, load_csv, split
from .errors import HammockError, InputError, NumericOverflowError
from .netconvert import StepNetwork, convert_ensemble, verify_equivalence
from .nncore import ARCHITECTURES, TrainConfig, build_model, evaluate, load_model, save_model, train
from .trees import load_ensemble


def _csv_options(args):
    label = args.label_column
    try:
        label = int(label)
    except ValueError:
        pass
    return {"delimiter": args.delimiter, "label_column": label,
            "header": False if args.no_header else None}


def _write_json(obj, out):
    text = json.dumps(obj, indent=1)
    if out is None or out == "-":
        print(text)
    else:
        Path(out).write_text(text + "\n", encoding="utf-8")


def cmd_bins(args):
    ds = load_csv(args.data, **_csv_options(args))
    spec = fit_binning(ds.features, args.bins)
    for entry in spec.describe():
        print(f"feature {entry['feature']}: {len(entry['boundaries']) + 1} bins "
              f"({len(entry['boundaries'])} boundaries)", file=sys.stderr if args.out in (None, "-")
              else sys.stdout)
    _write_json(spec.describe(), args.out)


def cmd_train(args):
    if args.arch != "hammock" and args.bins is not None:
        raise InputError(f"--bins only applies to --arch hammock, not {args.arch}")
    opts = _csv_options(args)
    if args.test:
        train_ds, test_ds = split(None, SplitSpec(train_path=args.data, test_path=args.test), **opts)
    else:
        train_ds, test_ds = load_csv(args.data, **opts), None
    model = build_model(args.arch, train_ds.features, train_ds.num_classes, hidden=args.hidden,
                        bins=args.bins or 50, seed=args.seed,
                        standardize=not args.no_standardize)
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch,
                         dropout_rate=args.dropout, rho=args.rho, eps=args.eps,
                         l1_weight=args.l1, l2_weight=args.l2,
                         shuffle_seed=args.seed if args.shuffle_seed is None else args.shuffle_seed,
                         validation_fraction=args.validation_fraction, patience=args.patience)

    def log(epoch, rep):
        if args.verbose:
            print(f"epoch {epoch + 1}: loss={rep.train_loss[-1]:.6g} "
                  f"train_acc={rep.train_accuracy[-1]:.4f} val_acc={rep.val_accuracy[-1]:.4f}",
                  file=sys.stderr)

    model, report = train(model, train_ds.features, train_ds.labels, config, log=log)
    model.metadata.update({"class_names": list(train_ds.class_names),
                           "feature_names": list(train_ds.feature_names or []),
                           "shuffle_seed": config.shuffle_seed})
    if args.out:
        save_model(model, args.out)
    if args.report:
        _write_json(report.to_dict(), args.report)
    train_acc, train_loss = evaluate(model, train_ds.features, train_ds.labels)
    print(f"epochs_run={len(report.train_loss)}")
    print(f"train_accuracy={train_acc!r}")
    if test_ds is not None:
        acc, loss = evaluate(model, test_ds.features, test_ds.labels)
        print(f"test_loss={loss!r}")
    else:
        acc = train_acc
    print(f"accuracy={acc!r}")


def cmd_eval(args):
    model = load_model(args.model)
    if isinstance(model, StepNetwork):
        raise InputError("eval takes a trained model, not a converted step network")
    names = model.metadata.get("class_names")
    ds = load_csv(args.data, class_names=names, **_csv_options(args))
    acc, loss = evaluate(model, ds.features, ds.labels)
    print(f"loss={loss!r}")
    print(f"accuracy={acc!r}")


def cmd_convert(args):
    ens = load_ensemble(args.ensemble)
    net = convert_ensemble(ens, args.epsilon)
    save_model(net, args.out)
    print(f"hidden_nodes={net.num_hidden} indicator_columns={net.transform.width}")


def _parse_range(text):
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise InputError(f"--range must look like lo:hi, got {text!r}") from None
    if not lo < hi:
        raise InputError(f"--range needs lo < hi, got {text!r}")
    return lo, hi


def cmd_verify(args):
    ens = load_ensemble(args.ensemble)
    net = load_model(args.network)
    if not isinstance(net, StepNetwork):
        raise InputError(f"{args.network} is not a step network")
    lo, hi = _parse_range(args.range)
    if args.samples < 0:
        raise InputError("--samples must be >= 0")
    rng = np.random.default_rng(args.seed)
    X = rng.uniform(lo, hi, size=(args.samples, ens.num_features))
    report = verify_equivalence(ens, net, X, tol=args.tol)
    print(json.dumps(report.to_dict()))


def build_parser():
    ap = argparse.ArgumentParser(prog="hammock", description=__doc__.splitlines()[0])
    ap.add_argument("--threads", type=int, default=None,
                    help="compiled-kernel threads (default: $HAMMOCK_THREADS or 1)")
    sub = ap.add_subparsers(dest="command", required=True)

    def csv_flags(p):
        p.add_argument("--delimiter", default=",")
        p.add_argument("--label-column", default="-1", help="name or index (default: last)")
        p.add_argument("--no-header", action="store_true",
                       help="first row is data (default: auto-detect)")

    p = sub.add_parser("bins", help="fit quantile bin boundaries")
    p.add_argument("--data", required=True)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--out", default=None, help="JSON output path (default: stdout)")
    csv_flags(p)
    p.set_defaults(func=cmd_bins)

    p = sub.add_parser("train", help="train hammock / lr-nn / nn-1l")
    p.add_argument("--data", required=True)
    p.add_argument("--test", default=None)
    p.add_argument("--arch", choices=ARCHITECTURES, default="hammock")
    p.add_argument("--hidden", type=int, default=1000)
    p.add_argument("--bins", type=int, default=None, help="hammock only (default 50)")
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shuffle-seed", type=int, default=None, help="default: --seed")
    p.add_argument("--rho", type=float, default=0.95)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--l1", type=float, default=0.0)
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--validation-fraction", type=float, default=0.0)
    p.add_argument("--patience", type=int, default=20)
    p.add_argument("--no-standardize", action="store_true", help="raw archs: skip scaling")
    p.add_argument("--out", default=None, help="model file to write")
    p.add_argument("--report", default=None, help="per-epoch report JSON to write")
    p.add_argument("-v", "--verbose", action="store_true")
    csv_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model on a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    csv_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("convert", help="compile an ensemble JSON into a step network")
    p.add_argument("--ensemble", required=True)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("verify", help="check a step network against its ensemble")
    p.add_argument("--ensemble", required=True)
    p.add_argument("--network", required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--range", default="0:1", help="sampling box lo:hi (use --range=-1:1)")
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        _accel.set_threads(args.threads if args.threads is not None else _accel.threads_from_env())
        args.func(args)
    except NumericOverflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (HammockError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
