"""Command-line entry point: ``salfer <subcommand> ...``.

Exit codes: 0 ok, 1 runtime failure, 2 usage error. Failures print one line
``salfer: error[<category>]: <message>`` on stderr. Every run writes a
``run_config.json`` (or ``<output>.run.json`` for single-file outputs) echoing
its arguments.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__

log = logging.getLogger("salfer")

OUT_ENV = "SALFER_OUT"
DEFAULT_OUT = "salfer-out"


def default_out_root():
    return Path(os.environ.get(OUT_ENV) or DEFAULT_OUT)


class CliError(Exception):
    def __init__(self, category, message):
        super().__init__(message)
        self.category = category


# --- helpers ----------------------------------------------------------------

def _ratios(text):
    try:
        parts = tuple(float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"ratios must be three comma-separated numbers, got {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"need exactly three ratios, got {len(parts)}")
    return parts


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _echo(args, target, is_file=False):
    """Write the run-config echo for this invocation next to its output."""
    target = Path(target)
    path = target.with_name(target.name + ".run.json") if is_file else target / "run_config.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    skip = {"func"}
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k not in skip}
    cfg["version"] = __version__
    path.write_text(json.dumps(cfg, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def _manifest(path):
    from .dataset import load_manifest

    m = load_manifest(path)
    if m.missing:
        log.warning("%d images referenced by %s are missing", len(m.missing), path)
    return m


def _split_samples(manifest, which):
    if which == "all":
        return manifest.all_samples()
    return manifest.split(which)


def _train_config(args):
    from .train import TrainConfig

    overrides = {
        "epochs": args.epochs, "base_lr": args.lr, "batch_size": args.batch_size, "momentum": args.momentum,
        "seed": args.seed, "backbone": args.backbone, "backbone_weights": args.weights,
        "input_variant": getattr(args, "variant", None),
    }
    if args.freeze_backbone:
        overrides["freeze_backbone"] = True
    if args.config:
        return TrainConfig.load(args.config, **overrides)
    return TrainConfig(**{k: v for k, v in overrides.items() if v is not None})


# --- subcommands ----------------------------------------------------------

def cmd_scan(args):
    from .dataset import Policy, SplitManifest, save_manifest, scan_dataset

    report = scan_dataset(args.root, args.layout, args.dataset_id)
    print(report.summary())
    out = args.out or default_out_root() / f"{args.dataset_id or args.layout}_all.csv"
    save_manifest(SplitManifest(tuple(report.samples), (), (), (1.0, 0.0, 0.0), Policy.FULL_TRAIN, args.seed), out)
    _echo(args, out, is_file=True)
    print(f"listing written to {out}")


def cmd_split(args):
    from .dataset import make_split, save_manifest, scan_dataset

    report = scan_dataset(args.root, args.layout, args.dataset_id)
    m = make_split(report.samples, args.ratios, args.policy, args.seed)
    save_manifest(m, args.out)
    _echo(args, args.out, is_file=True)
    print(f"train/val/test = {'/'.join(map(str, m.sizes))} ({m.policy.value}, seed {m.seed}) -> {args.out}")


def cmd_preprocess(args):
    from .pipeline import preprocess_samples

    m = _manifest(args.manifest)
    rep = preprocess_samples(_split_samples(m, args.split), args.out_dir, args.on_no_face, args.jobs, args.cascade)
    _echo(args, args.out_dir)
    print(rep.summary("faces"))


def cmd_saliency(args):
    from .pipeline import saliency_samples

    m = _manifest(args.manifest)
    backend = args.backend
    config = {}
    if backend.startswith("external:"):
        backend = backend.split(":", 1)[1]
        config = {"maps_dir": args.maps_dir, "command": args.command}
    elif backend != "spectral":
        raise CliError("usage", f"--backend must be 'spectral' or 'external:<id>', got {args.backend!r}")
    faces = args.faces_dir or Path(args.out_dir).parent / "faces"
    rep = saliency_samples(_split_samples(m, args.split), faces, args.out_dir, backend, args.jobs, **config)
    _echo(args, args.out_dir)
    print(rep.summary("saliency"))


def cmd_product(args):
    from .pipeline import product_dirs

    rep = product_dirs(args.faces_dir, args.saliency_dir, args.out_dir, args.renormalize, args.jobs)
    _echo(args, args.out_dir)
    print(rep.summary("products"))


def cmd_train(args):
    from .nn import ClassifierModel, load_backbone, save_model
    from .train import train, write_records

    config = _train_config(args)
    m = _manifest(args.manifest)
    backbone = load_backbone(config.backbone, config.backbone_weights, seed=config.seed)
    model = ClassifierModel(backbone, dropout_p=config.dropout_p, seed=config.seed)
    result = train(model, m, config, args.work_dir)
    out = Path(args.out)
    cfg = dataclasses.asdict(config)
    save_model(result.best_model, out, cfg)
    save_model(result.model, out.with_name(out.stem + ".final" + out.suffix), cfg)
    write_records(result.records, out.with_name(out.name + ".epochs.csv"))
    _echo(args, out, is_file=True)
    last = result.records[-1]
    print(f"{len(result.records)} epochs, {result.steps} steps; final train_loss {last.train_loss:.4f}; "
          f"best checkpoint epoch {result.best_epoch} -> {out}")


def cmd_eval(args):
    from .evaluation import evaluate, format_matrix, overall_accuracy, render_reports
    from .nn import load_model
    from .train import VARIANT_DIRS, available

    model = load_model(args.model)
    m = _manifest(args.manifest)
    image_dir = Path(args.work_dir) / VARIANT_DIRS[args.variant]
    samples = _split_samples(m, args.split)
    usable = available(samples, image_dir)
    if len(usable) < len(samples):
        log.warning("%d of %d images have no preprocessed input and are left out",
                    len(samples) - len(usable), len(samples))
    cm = evaluate(model, usable, image_dir)
    render_reports(cm, None, args.out_dir)
    text = f"overall accuracy: {overall_accuracy(cm):.2f}% on {cm.total} images\n\n{format_matrix(cm)}\n"
    (Path(args.out_dir) / "summary.txt").write_text(text, encoding="utf-8")
    _echo(args, args.out_dir)
    print(text, end="")


def cmd_experiment(args):
    from .experiment import run_experiment

    config = _train_config(args)
    out = args.out_dir or default_out_root() / args.preset
    ext = {}
    backend = args.saliency_backend
    if backend.startswith("external:"):
        backend = backend.split(":", 1)[1]
        ext = {"maps_dir": args.maps_dir, "command": args.command}
    _echo(args, out)
    cm, result, provenance = run_experiment(args.preset, config, args.cfee_root, args.rafd_root, out, args.jobs,
                                            args.on_no_face, backend, **ext)
    print((Path(out) / "summary.txt").read_text(encoding="utf-8"), end="")


def cmd_report(args):
    from .evaluation import format_matrix, overall_accuracy, read_confusion_csv, render_reports
    from .train import read_records

    cm = read_confusion_csv(args.confusion)
    records = read_records(args.epochs) if args.epochs else None
    render_reports(cm, records, args.out_dir)
    _echo(args, args.out_dir)
    print(f"overall accuracy: {overall_accuracy(cm):.2f}%\n{format_matrix(cm)}")


def cmd_synth(args):
    from .synthetic import make_cfee_like, make_rafd_like

    make = make_cfee_like if args.kind == "cfee" else make_rafd_like
    kwargs = {"size": args.size, "seed": args.seed}
    if args.subjects:
        kwargs["subjects"] = args.subjects
    root = make(args.out, **kwargs)
    _echo(args, root)
    print(f"synthetic {args.kind} dataset written to {root}")


# --- parser -----------------------------------------------------------------

def _train_flags(p):
    p.add_argument("--config", help="flat key = value training config file")
    p.add_argument("--epochs", type=_positive_int)
    p.add_argument("--lr", type=float, help="base learning rate")
    p.add_argument("--batch-size", type=_positive_int)
    p.add_argument("--momentum", type=float)
    p.add_argument("--backbone", choices=("reference", "alexnet"))
    p.add_argument("--weights", help="backbone weights file (never downloaded)")
    p.add_argument("--freeze-backbone", action="store_true")


def _common():
    # global flags, accepted before or after the subcommand; a fresh parser per use
    # because argparse shares action objects with its children
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    common.add_argument("--jobs", type=_positive_int, default=argparse.SUPPRESS,
                        help="worker processes for per-image stages (default 1)")
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)
    return common


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="salfer", description="Saliency-product facial expression recognition.",
                                     parents=[_common()])
    parser.set_defaults(seed=0, jobs=1, verbose=0)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command_name", metavar="COMMAND")

    p = sub.add_parser("scan", parents=[common], help="list the labeled images of a dataset")
    p.add_argument("--root", required=True)
    p.add_argument("--layout", required=True, choices=("cfee", "rafd"))
    p.add_argument("--dataset-id")
    p.add_argument("--out", help=f"listing CSV (default ${OUT_ENV}/<layout>_all.csv)")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("split", parents=[common], help="write a train/val/test manifest")
    p.add_argument("--root", required=True)
    p.add_argument("--layout", required=True, choices=("cfee", "rafd"))
    p.add_argument("--dataset-id")
    p.add_argument("--ratios", type=_ratios, default=(0.7, 0.15, 0.15))
    p.add_argument("--policy", choices=("by-image", "by-subject", "full-train"), default="by-image")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("preprocess", parents=[common], help="detect, crop and normalize faces")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--on-no-face", choices=("skip", "full-frame"), default="skip")
    p.add_argument("--cascade", help="Haar cascade XML (default: bundled frontal-face cascade)")
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="all")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("saliency", parents=[common], help="saliency maps for preprocessed faces")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--faces-dir", help="default: 'faces' next to --out-dir")
    p.add_argument("--backend", default="spectral", help="spectral | external:precomputed | external:command")
    p.add_argument("--maps-dir", help="directory of precomputed maps (external:precomputed)")
    p.add_argument("--command", help="program run as CMD IN.png OUT.npy (external:command)")
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="all")
    p.set_defaults(func=cmd_saliency)

    p = sub.add_parser("product", parents=[common], help="saliency-scaled face images")
    p.add_argument("--faces-dir", required=True)
    p.add_argument("--saliency-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--renormalize", action="store_true", help="stretch each product to a 255 peak")
    p.set_defaults(func=cmd_product)

    p = sub.add_parser("train", parents=[common], help="train a classifier on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--work-dir", required=True, help="directory holding faces/ (and products/)")
    p.add_argument("--variant", choices=("plain", "saliency_product"))
    p.add_argument("--out", required=True, help="model file (best-validation checkpoint)")
    _train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="confusion matrix of a model on a manifest split")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--work-dir", required=True)
    p.add_argument("--variant", choices=("plain", "saliency_product"), default="plain")
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", parents=[common], help="run preset E1-E4 end to end")
    p.add_argument("--preset", required=True, choices=("E1", "E2", "E3", "E4"))
    p.add_argument("--cfee-root")
    p.add_argument("--rafd-root")
    p.add_argument("--out-dir", help=f"default ${OUT_ENV}/<preset>")
    p.add_argument("--on-no-face", choices=("skip", "full-frame"), default="skip")
    p.add_argument("--saliency-backend", default="spectral")
    p.add_argument("--maps-dir")
    p.add_argument("--command")
    _train_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", parents=[common], help="re-render reports from saved CSVs")
    p.add_argument("--confusion", required=True)
    p.add_argument("--epochs", help="epoch records CSV")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic CFEE- or RaFD-shaped dataset")
    p.add_argument("--kind", required=True, choices=("cfee", "rafd"))
    p.add_argument("--out", required=True)
    p.add_argument("--subjects", type=_positive_int)
    p.add_argument("--size", type=_positive_int, default=200)
    p.set_defaults(func=cmd_synth)
    return parser


def _category(exc):
    from .dataset import DatasetError, ManifestError
    from .evaluation import EvaluationError
    from .face import DetectorError
    from .nn import BackboneError, ModelFormatError
    from .saliency import BackendError
    from .train import TrainingError

    table = [
        (ManifestError, "manifest"), (DatasetError, "dataset"), (DetectorError, "detector"),
        (BackendError, "saliency-backend"), (BackboneError, "backbone"), (ModelFormatError, "model-format"),
        (TrainingError, "training"), (EvaluationError, "evaluation"), (FileNotFoundError, "missing-file"),
        (OSError, "io"), (ValueError, "invalid-value"), (KeyError, "invalid-value"),
    ]
    for cls, name in table:
        if isinstance(exc, cls):
            return name
    return "internal"


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    args = parser.parse_args(argv)
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return 2
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CliError as exc:
        print(f"salfer: error[{exc.category}]: {exc}", file=sys.stderr)
        return 2 if exc.category == "usage" else 1
    except Exception as exc:  # noqa: BLE001 - top-level reporter
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"salfer: error[{_category(exc)}]: {msg}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
