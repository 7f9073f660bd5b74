"""Command-line entry: gen-data, train, eval, ablate, gradcheck, report.

Exit codes: 0 success, 1 validation or config error, 2 numeric failure
(non-finite loss or a failed gradient check).
"""

import argparse
import sys
from pathlib import Path

from .ablate import AXES, ablate, emit_ablation_table, load_ablation, save_ablation
from .config import ExperimentConfig
from .errors import ConfigError, DivsegError, NumericError, ParseError
from .evaluate import emit_table, evaluate_subsets, load_report, save_report
from .gradcheck import gradcheck
from .network import load_params, save_params
from .phantom import Manifest, make_dataset
from .train import train

CHECKPOINT_NAME = "checkpoint.dsegprm"


class _Parser(argparse.ArgumentParser):
    """argparse maps usage errors to exit 2; here 2 is reserved for numeric
    failures, so usage problems surface as config errors (exit 1)."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _parser():
    parser = _Parser(
        prog="divseg",
        description="Missing-modality volumetric segmentation experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a phantom dataset")
    p.add_argument("--out", required=True, help="dataset root directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train", type=int, default=40, help="training samples")
    p.add_argument("--test", type=int, default=10, help="test samples")
    p.add_argument("--dims", type=int, default=16, help="cubic volume extent")

    p = sub.add_parser("train", help="train a model from a config")
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--out", default=None, help="override config output directory")

    p = sub.add_parser("eval", help="evaluate a checkpoint over all 15 subsets")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--checkpoint", default=None, help="default <out>/" + CHECKPOINT_NAME)
    p.add_argument("--format", choices=("csv", "markdown"), default="csv")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("ablate", help="train and evaluate one ablation axis")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", required=True, choices=AXES)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "markdown"), default="csv")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="also write the report here")

    p = sub.add_parser("report", help="re-emit a saved JSON report as a table")
    p.add_argument("input", help="report.json or ablation_<axis>.json")
    p.add_argument("--format", choices=("csv", "markdown"), default="csv")
    p.add_argument("--out", default=None, help="output directory (default: input's)")
    return parser


def _load_config(args):
    cfg = ExperimentConfig.load(args.config)
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        overrides["out_dir"] = args.out
    return cfg.replace(**overrides) if overrides else cfg


def _out_dir(cfg):
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(cfg, split):
    return Manifest.load(Path(cfg.data_dir) / split / "manifest.json")


def _write_train_log(path, log):
    lines = ["epoch,dice,mi,hd,total"]
    for row in log:
        lines.append(
            f"{row['epoch']},{row['dice']!r},{row['mi']!r},"
            f"{row['hd']!r},{row['total']!r}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cmd_gen_data(args):
    manifests = make_dataset(args.train, args.test, args.seed, args.out, args.dims)
    for split, manifest in manifests.items():
        print(f"{split}: {len(manifest)} samples under {manifest.root}")
    return 0


def _cmd_train(args):
    cfg = _load_config(args)
    out = _out_dir(cfg)
    manifest = _manifest(cfg, "train")

    def hook(row):
        print(
            f"epoch {row['epoch']:>3}/{cfg.epochs}  dice {row['dice']:.4f}  "
            f"mi {row['mi']:.4f}  hd {row['hd']:.4f}  total {row['total']:.4f}",
            file=sys.stderr,
        )

    params, log = train(cfg, manifest, log_hook=hook)
    save_params(out / CHECKPOINT_NAME, params)
    _write_train_log(out / "train_log.csv", log)
    cfg.save(out / "config.json")
    print(f"checkpoint: {out / CHECKPOINT_NAME}")
    return 0


def _cmd_eval(args):
    cfg = _load_config(args)
    out = _out_dir(cfg)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / CHECKPOINT_NAME
    params = load_params(ckpt)
    report = evaluate_subsets(params, _manifest(cfg, "test"), jobs=args.jobs)
    save_report(report, out / "report.json")
    ext = "csv" if args.format == "csv" else "md"
    table_path = out / f"report.{ext}"
    emit_table(report, args.format, table_path)
    print(emit_table(report, args.format), end="")
    print(f"report: {table_path}")
    return 0


def _cmd_ablate(args):
    cfg = _load_config(args)
    out = _out_dir(cfg)
    result = ablate(
        cfg,
        args.axis,
        _manifest(cfg, "train"),
        _manifest(cfg, "test"),
        jobs=args.jobs,
        progress=lambda msg: print(msg, file=sys.stderr),
    )
    save_ablation(result, out / f"ablation_{args.axis}.json")
    ext = "csv" if args.format == "csv" else "md"
    table_path = out / f"ablation_{args.axis}.{ext}"
    emit_ablation_table(result, args.format, table_path)
    print(emit_ablation_table(result, args.format), end="")
    print(f"report: {table_path}")
    return 0


def _cmd_gradcheck(args):
    report = gradcheck(seed=args.seed)
    text = report.format()
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "gradcheck.txt").write_text(text + "\n", encoding="utf-8")
    return 0 if report.passed else 2


def _cmd_report(args):
    path = Path(args.input)
    out = Path(args.out) if args.out else path.parent
    out.mkdir(parents=True, exist_ok=True)
    ext = "csv" if args.format == "csv" else "md"
    try:
        result = load_ablation(path)
        table_path = out / f"{path.stem}.{ext}"
        text = emit_ablation_table(result, args.format, table_path)
    except ParseError:
        report = load_report(path)
        table_path = out / f"{path.stem}.{ext}"
        text = emit_table(report, args.format, table_path)
    print(text, end="")
    print(f"report: {table_path}")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "gradcheck": _cmd_gradcheck,
    "report": _cmd_report,
}


def main(argv=None):
    try:
        args = _parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except DivsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
