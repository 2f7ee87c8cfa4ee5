"""``leafscope`` command line.

Exit codes: 0 success, 1 user error (bad arguments, missing or invalid
inputs, refused overwrite), 2 internal failure.
"""

import argparse
import itertools
import json
import logging
import os
import sys
import traceback
from dataclasses import replace
from pathlib import Path

from . import __version__
from .errors import LeafscopeError

SEED_ENV = "LEAFSCOPE_SEED"

log = logging.getLogger("leafscope")


class UsageError(LeafscopeError):
    def __init__(self, message, usage=""):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, self.format_usage())


def default_seed():
    value = os.environ.get(SEED_ENV)
    if value is None:
        return 0
    try:
        return int(value)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {value!r}") from None


def _claim_output(path, overwrite, is_dir=False):
    """Refuse to clobber an existing output unless ``--overwrite`` was given."""
    path = Path(path)
    occupied = path.exists() and (not path.is_dir() or any(path.iterdir()))
    if occupied and not overwrite:
        raise UsageError(f"output {path} already exists; pass --overwrite to replace it")
    if is_dir:
        path.mkdir(parents=True, exist_ok=True)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _parse_ratios(text):
    try:
        ratios = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"--ratios must be three comma-separated numbers, got {text!r}") from None
    if len(ratios) != 3:
        raise UsageError(f"--ratios needs exactly three values, got {text!r}")
    return ratios


def cmd_version(args):
    print(__version__)


def cmd_ingest(args):
    from .dataset import ingest_directory

    out = _claim_output(args.output, args.overwrite)
    manifest = ingest_directory(args.root)
    manifest.save(out)
    print(f"ingested {len(manifest)} images -> {out}")


def cmd_split(args):
    from .dataset import DatasetManifest, stratified_split

    src = Path(args.manifest)
    manifest = DatasetManifest.load(src)
    out = Path(args.output) if args.output else src
    if out.resolve() != src.resolve():
        _claim_output(out, args.overwrite)
    seed = default_seed() if args.seed is None else args.seed
    split = stratified_split(manifest, _parse_ratios(args.ratios), seed)
    split.save(out)
    sizes = {s: len(split.split_entries(s)) for s in ("train", "val", "test")}
    print(f"split with seed {seed}: {sizes} -> {out}")


def _load_config(path, seed):
    from .trainer import TrainConfig

    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config not found: {path}")
    raw = json.loads(path.read_text())
    config = TrainConfig.load(path)
    if seed is not None:
        config = replace(config, seed=seed)
    elif "seed" not in raw:
        config = replace(config, seed=default_seed())
    return config


def cmd_train(args):
    from .trainer import load_manifest_for, model_for, train, write_run

    config = _load_config(args.config, args.seed)
    manifest = load_manifest_for(config)
    out = _claim_output(args.output, args.overwrite, is_dir=True)
    model = model_for(config)
    checkpoint, train_log = train(model, manifest, config)
    write_run(out, model, checkpoint, train_log)
    print(f"best epoch {checkpoint.epoch} val_accuracy {checkpoint.val_accuracy:.4f} -> {out}")


def cmd_grid(args):
    from .trainer import (REFERENCE_BATCH_SIZES, REFERENCE_EPOCHS, REFERENCE_LEARNING_RATES, TrainConfig,
                          load_manifest_for, model_for, run_grid)

    path = Path(args.config)
    if not path.is_file():
        raise UsageError(f"grid config not found: {path}")
    doc = json.loads(path.read_text())
    base_doc = dict(doc.get("base", {}))
    if args.seed is not None:
        base_doc["seed"] = args.seed
    elif "seed" not in base_doc:
        base_doc["seed"] = default_seed()
    base = TrainConfig.from_dict(base_doc)
    if base.manifest_path and not Path(base.manifest_path).is_absolute():
        base = replace(base, manifest_path=str(path.parent / base.manifest_path))
    grid = [
        replace(base, epochs=e, batch_size=b, learning_rate=lr)
        for e, b, lr in itertools.product(
            doc.get("epochs", REFERENCE_EPOCHS),
            doc.get("batch_size", REFERENCE_BATCH_SIZES),
            doc.get("learning_rate", REFERENCE_LEARNING_RATES),
        )
    ]
    manifest = load_manifest_for(base)
    out = _claim_output(args.output, args.overwrite, is_dir=True)
    report = run_grid(model_for, manifest, grid, run_root=out)
    (out / "grid.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    for row in report.rows:
        acc = "-" if row.best_val_accuracy is None else f"{row.best_val_accuracy:.4f}"
        print(f"{row.config.label}\t{row.status}\t{acc}")


def cmd_evaluate(args):
    from .backbones import load_checkpoint
    from .dataset import DatasetManifest
    from .trainer import evaluate_split

    model, _ = load_checkpoint(args.checkpoint)
    manifest = DatasetManifest.load(args.manifest)
    out = _claim_output(args.output, args.overwrite)
    report = evaluate_split(model, manifest, args.split)
    out.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(f"{args.split}: accuracy {report.accuracy:.4f} f1 {report.f1:.4f} -> {out}")


def cmd_explain(args):
    from .backbones import load_checkpoint
    from .cam import METHODS, explain

    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise UsageError(f"unknown method(s) {', '.join(unknown)}; choose from {', '.join(METHODS)}")
    if not Path(args.image).is_file():
        raise UsageError(f"image not found: {args.image}")
    model, _ = load_checkpoint(args.checkpoint)
    if args.layer and args.layer not in model.layers:
        raise UsageError(f"unknown layer {args.layer!r}")
    if args.class_index is not None and not 0 <= args.class_index < model.num_classes:
        raise UsageError(f"--class must lie in 0..{model.num_classes - 1}")
    out = _claim_output(args.output, args.overwrite, is_dir=True)
    _, _, record = explain(model, args.image, methods, args.layer, args.class_index, out,
                           alpha=args.alpha, colormap=args.colormap)
    print(f"predicted {record['predicted_label']}, explained class {record['class_used']} "
          f"at {record['layer_used']} -> {out}")
    if record.get("errors"):
        for method, err in record["errors"].items():
            print(f"{method} failed: {err}", file=sys.stderr)
        return 2


def cmd_compare(args):
    from .metrics import EvalReport, render_reports

    loaded = []
    for run in args.runs:
        report_path = Path(run) / "report.json"
        if not report_path.is_file():
            print(f"skipped {run}: no report.json", file=sys.stderr)
            continue
        loaded.append((Path(run), EvalReport.from_dict(json.loads(report_path.read_text()))))
    if not loaded:
        raise UsageError("no run directory contains report.json")

    archs = [r.architecture or p.name for p, r in loaded]
    unique = len(set(archs)) == len(archs)
    reports = {(a if unique else p.name): r for a, (p, r) in zip(archs, loaded)}
    out = _claim_output(args.output, args.overwrite, is_dir=True)
    table = render_reports(reports, out)
    for row in table:
        print(f"{row['architecture']}\t{row['accuracy']:.4f}\t{row['f1']:.4f}")


def build_parser():
    parser = _Parser(prog="leafscope", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    p = sub.add_parser("version", help="print the package version")
    p.set_defaults(func=cmd_version)

    def with_output(p, required=True, help="output path"):
        p.add_argument("-o", "--output", required=required, help=help)
        p.add_argument("--overwrite", action="store_true", help="replace existing outputs")

    p = sub.add_parser("ingest", help="scan a class-per-directory corpus into a manifest")
    p.add_argument("root")
    with_output(p, help="manifest JSON to write")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="stratified train/val/test split of a manifest")
    p.add_argument("manifest")
    p.add_argument("--seed", type=int)
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    with_output(p, required=False, help="output manifest (default: update in place)")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train one configuration")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--seed", type=int)
    with_output(p, help="run directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="train every cell of a hyperparameter grid")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--seed", type=int)
    with_output(p, help="directory receiving one run directory per cell")
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("evaluate", help="metrics of a checkpoint on one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    with_output(p, help="report JSON to write")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explain", help="CAM heatmaps and overlays for one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--methods", default="gradcam,gradcampp,scorecam,layercam")
    p.add_argument("--layer")
    p.add_argument("--class", dest="class_index", type=int)
    p.add_argument("--alpha", type=float, default=0.4)
    p.add_argument("--colormap", default="bluered")
    p.add_argument("--seed", type=int, help="accepted for uniformity; explanation is deterministic")
    with_output(p, help="output directory")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("compare", help="comparison table across evaluated runs")
    p.add_argument("runs", nargs="+")
    with_output(p, help="output directory")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command is None:
            raise UsageError("no command given", parser.format_usage())
        return args.func(args) or 0
    except UsageError as exc:
        if exc.usage:
            print(exc.usage, end="", file=sys.stderr)
        print(f"leafscope: error: {exc}", file=sys.stderr)
        return 1
    except (LeafscopeError, ValueError, OSError) as exc:
        print(f"leafscope: error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
