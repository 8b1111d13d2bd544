"""Cross-dataset experiment presets E1-E4 and the end-to-end runner."""
from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .dataset import DatasetError, Policy, SplitManifest, make_split, save_manifest, scan_dataset
from .evaluation import (EvaluationError, evaluate, format_matrix, overall_accuracy, per_class_accuracy,
                         render_reports)
from .nn import ClassifierModel, load_backbone, save_model
from .pipeline import preprocess_samples, product_dirs, saliency_samples
from .synthetic import is_synthetic
from .train import VARIANT_DIRS, TrainConfig, available, train

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentPreset:
    id: str
    train_dataset: str
    test_dataset: str
    policy: str
    ratios: tuple
    variant: str
    reference_accuracy: float
    description: str


PRESETS = {
    "E1": ExperimentPreset("E1", "cfee", "cfee", "by-image", (0.70, 0.152, 0.148), "plain", 74.79,
                           "CFEE train/val/test split by image"),
    "E2": ExperimentPreset("E2", "rafd", "rafd", "by-subject", (0.70, 0.15, 0.15), "plain", 95.71,
                           "RaFD train/val/test split by subject"),
    "E3": ExperimentPreset("E3", "cfee", "rafd", "full-train", (1.0, 0.0, 0.0), "plain", 77.19,
                           "train on all of CFEE, test on all of RaFD"),
    "E4": ExperimentPreset("E4", "cfee", "rafd", "full-train", (1.0, 0.0, 0.0), "saliency_product", 65.39,
                           "train on CFEE saliency products, test on RaFD saliency products"),
}


def build_manifest(preset, roots, seed):
    """Scan the preset's datasets and split them. ``roots`` maps 'cfee'/'rafd' to directories."""
    scans = {}
    for ds in dict.fromkeys((preset.train_dataset, preset.test_dataset)):
        root = roots.get(ds)
        if root is None:
            raise DatasetError(f"preset {preset.id} needs the {ds.upper()} dataset (--{ds}-root)")
        report = scan_dataset(root, ds)
        if not report.samples:
            raise DatasetError(f"preset {preset.id}: no {ds.upper()} images found under {root}")
        log.info("%s: %s", ds, report.summary())
        scans[ds] = report.samples
    if preset.train_dataset == preset.test_dataset:
        return make_split(scans[preset.train_dataset], preset.ratios, preset.policy, seed)
    return SplitManifest(tuple(scans[preset.train_dataset]), (), tuple(scans[preset.test_dataset]),
                         preset.ratios, Policy.FULL_TRAIN, seed)


def prepare_inputs(manifest, variant, work_dir, jobs=1, on_no_face="skip", saliency_backend="spectral",
                   **external_config):
    """Run the preprocessing stages a variant needs; returns the stage directory to read."""
    work_dir = Path(work_dir)
    samples = manifest.all_samples()
    faces = work_dir / "faces"
    rep = preprocess_samples(samples, faces, on_no_face=on_no_face, jobs=jobs)
    log.info(rep.summary("faces"))
    if variant == "saliency_product":
        rep = saliency_samples(samples, faces, work_dir / "saliency", backend=saliency_backend, jobs=jobs,
                               **external_config)
        log.info(rep.summary("saliency"))
        rep = product_dirs(faces, work_dir / "saliency", work_dir / VARIANT_DIRS[variant], jobs=jobs)
        log.info(rep.summary("products"))
    return work_dir / VARIANT_DIRS[variant]


def summary_text(preset, cm, provenance, config, n_test_dropped, best_epoch, has_val=True):
    acc = overall_accuracy(cm)
    lines = [
        f"experiment {preset.id}: {preset.description}",
        f"provenance: {provenance}",
        f"input variant: {preset.variant}",
        f"seed: {config.seed}",
        f"epochs: {config.epochs}, base_lr: {config.base_lr}, lr_decay: {config.lr_decay}, "
        f"batch_size: {config.batch_size}, momentum: {config.momentum}",
        f"backbone: {config.backbone}",
        f"evaluated checkpoint: best validation (epoch {best_epoch})" if has_val
        else f"evaluated checkpoint: final (epoch {best_epoch}, no validation set)",
        f"test images: {cm.total} ({n_test_dropped} left out, no face found)",
        f"overall accuracy: {acc:.2f}%",
    ]
    if provenance == "real":
        delta = acc - preset.reference_accuracy
        lines.append(f"published accuracy: {preset.reference_accuracy:.2f}% (delta {delta:+.2f} points)")
    else:
        lines.append("SYNTHETIC DATA: accuracies are pipeline checks and are not comparable to published numbers")
    lines += ["", format_matrix(cm), ""]
    return "\n".join(lines)


def run_experiment(preset_id, config=None, cfee_root=None, rafd_root=None, out_dir="experiment", jobs=1,
                   on_no_face="skip", saliency_backend="spectral", **external_config):
    """Scan, split, preprocess, train, evaluate and write the report bundle into ``out_dir``."""
    if preset_id not in PRESETS:
        raise KeyError(f"unknown preset {preset_id!r}; known: {', '.join(PRESETS)}")
    preset = PRESETS[preset_id]
    config = dataclasses.replace(config or TrainConfig(), input_variant=preset.variant)
    out_dir = Path(out_dir)
    roots = {"cfee": cfee_root, "rafd": rafd_root}
    manifest = build_manifest(preset, roots, config.seed)
    save_manifest(manifest, out_dir / "manifest.csv")

    image_dir = prepare_inputs(manifest, preset.variant, out_dir / "work", jobs=jobs, on_no_face=on_no_face,
                               saliency_backend=saliency_backend, **external_config)
    backbone = load_backbone(config.backbone, config.backbone_weights, seed=config.seed)
    model = ClassifierModel(backbone, dropout_p=config.dropout_p, seed=config.seed)
    result = train(model, manifest, config, out_dir / "work")

    test = available(manifest.test, image_dir)
    if not test:
        raise EvaluationError(f"preset {preset.id}: no test images survived preprocessing")
    cm = evaluate(result.best_model, test, image_dir)

    used = [roots[ds] for ds in dict.fromkeys((preset.train_dataset, preset.test_dataset))]
    provenance = "synthetic" if any(is_synthetic(r) for r in used) else "real"
    render_reports(cm, result.records, out_dir)
    cfg = dataclasses.asdict(config)
    save_model(result.best_model, out_dir / "model_best.salfer", cfg)
    save_model(result.model, out_dir / "model_final.salfer", cfg)
    text = summary_text(preset, cm, provenance, config, len(manifest.test) - len(test), result.best_epoch,
                        has_val=bool(manifest.val))
    (out_dir / "summary.txt").write_text(text, encoding="utf-8")
    meta = {
        "preset": preset.id, "provenance": provenance, "version": __version__,
        "overall_accuracy": overall_accuracy(cm), "per_class_accuracy": per_class_accuracy(cm),
        "published_accuracy": preset.reference_accuracy if provenance == "real" else None,
        "split_sizes": list(manifest.sizes), "best_epoch": result.best_epoch,
    }
    (out_dir / "summary.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return cm, result, provenance
