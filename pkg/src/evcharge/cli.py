"""Command-line entry point: ``evcharge <subcommand> [flags]``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline
from .errors import DataError, EvChargeError, InternalCheckFailed

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _grid(text: str):
    try:
        ni, nj = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError("grid must look like 4x4") from None
    return ni, nj


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON pipeline config")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", type=Path, help="run directory (default: run)")
    common.add_argument("--model", choices=pipeline.MODELS)
    common.add_argument("--grid", type=_grid, metavar="NIxNJ")
    common.add_argument("--feature-metric", choices=("euclidean", "manhattan", "pearson"))
    common.add_argument("--pixel-metric", choices=("euclidean", "manhattan"))
    common.add_argument("--error", choices=("abs", "sq"))
    common.add_argument("--epochs", type=int)
    common.add_argument("--batch-size", type=int)
    common.add_argument("--optimizer", choices=("adam", "sgd"))

    parser = _Parser(prog="evcharge", description="EV charge-level pipeline")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    gen = sub.add_parser("generate", parents=[common], help="write a synthetic trips.csv")
    gen.add_argument("--n", type=int, help="number of trips")
    gen.add_argument("--signal", type=float, help="planted-rule strength in [0, 1]")
    pre = sub.add_parser("preprocess", parents=[common], help="encode, downsample and split")
    pre.add_argument("--data", type=Path, help="trip CSV to use instead of <out>/trips.csv")
    sub.add_parser("convert", parents=[common], help="render IGTD images")
    sub.add_parser("train", parents=[common], help="fit one model")
    ev = sub.add_parser("evaluate", parents=[common], help="score a trained model")
    ev.add_argument("--cv", action="store_true", help="also run k-fold cross-validation")
    sub.add_parser("report", parents=[common], help="comparison table of all reports")
    sub.add_parser("selftest", parents=[common], help="gradient and IGTD consistency checks")
    return parser


def config_from_args(args) -> dict:
    user = {}
    if args.config is not None:
        try:
            user = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read config {args.config}: {exc}") from None
    cfg = pipeline.resolve_config(user)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.model is not None:
        cfg["model"]["name"] = args.model
    if args.grid is not None:
        cfg["igtd"]["ni"], cfg["igtd"]["nj"] = args.grid
    for flag, key in (("feature_metric", "feature_metric"), ("pixel_metric", "pixel_metric"),
                      ("error", "error_kind")):
        if getattr(args, flag) is not None:
            cfg["igtd"][key] = getattr(args, flag)
    for flag in ("epochs", "batch_size", "optimizer"):
        if getattr(args, flag) is not None:
            cfg["model"]["cnn"][flag] = getattr(args, flag)
    if getattr(args, "n", None) is not None:
        cfg["data"]["n"] = args.n
    if getattr(args, "signal", None) is not None:
        cfg["data"]["signal_strength"] = args.signal
    if getattr(args, "data", None) is not None:
        cfg["data"]["csv"] = str(args.data)
    cfg["out"] = str(args.out if args.out is not None else user.get("out", "run"))
    return cfg


def dispatch(args, cfg) -> int:
    out = Path(cfg["out"])
    cmd = args.command
    if cmd == "generate":
        print(f"wrote {pipeline.run_generate(cfg, out)}")
    elif cmd == "preprocess":
        info = pipeline.run_preprocess(cfg, out)
        print(f"{info['rows']} rows, {info['features']} tabular features, "
              f"{info['image_features']} image features")
    elif cmd == "convert":
        a = pipeline.run_convert(cfg, out)
        print(f"assignment error {a.error:g} after {a.history} accepted swaps")
    elif cmd == "train":
        info = pipeline.run_train(cfg, out)
        print(f"trained {info['model']} in {info['seconds']:.2f}s")
    elif cmd == "evaluate":
        r = pipeline.run_evaluate(cfg, out, with_cv=args.cv)
        print(r.report.to_text(), end="")
        if r.cv is not None:
            print(f"{r.cv['k']}-fold cross-validated accuracy {r.cv['mean_accuracy']:.4f}")
    elif cmd == "report":
        print(pipeline.run_report(cfg, out), end="")
    elif cmd == "selftest":
        from .selftest import run_selftest

        failed = 0
        for name, ok, detail in run_selftest(int(cfg["seed"])):
            print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
            failed += not ok
        if failed:
            raise InternalCheckFailed(f"{failed} self-test check(s) failed")
    return EXIT_OK


def _fail(kind: str, message: str, code: int) -> int:
    print("error: " + json.dumps({"kind": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = config_from_args(args)
        return dispatch(args, cfg)
    except UsageError as exc:
        return _fail("UsageError", str(exc), EXIT_USAGE)
    except InternalCheckFailed as exc:
        return _fail("InternalCheckFailed", str(exc), EXIT_CHECK)
    except (EvChargeError, OSError, ValueError) as exc:
        return _fail("DataError", str(exc), EXIT_DATA)


if __name__ == "__main__":
    sys.exit(main())
