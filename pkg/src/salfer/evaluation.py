"""Confusion matrices, accuracy metrics, experiment presets, and report files."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

from .dataset import CLASS_NAMES, Emotion

log = logging.getLogger(__name__)

N = len(Emotion)
UNDEFINED = "n/a"
CORNER = "true\\predicted"
ACCURACY_ROW = "accuracy"


class EvaluationError(Exception):
    pass


def percent(num, den):
    """``100 * num / den`` rounded half-up to 2 decimals."""
    q = (Decimal(int(num)) * 100 / Decimal(int(den))).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    return float(q)


@dataclass
class ConfusionMatrix:
    """7x7 counts; rows are true classes, columns predictions, canonical emotion order."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (N, N):
            raise ValueError(f"confusion matrix must be {N}x{N}, got {c.shape}")
        if not np.issubdtype(c.dtype, np.integer):
            if not np.all(c == np.floor(c)):
                raise ValueError("confusion counts must be integers")
        c = c.astype(np.int64)
        if (c < 0).any():
            raise ValueError("confusion counts must be non-negative")
        self.counts = c

    @classmethod
    def empty(cls):
        return cls(np.zeros((N, N), np.int64))

    @classmethod
    def from_predictions(cls, true, pred):
        c = np.zeros((N, N), np.int64)
        np.add.at(c, (np.asarray(true, np.intp), np.asarray(pred, np.intp)), 1)
        return cls(c)

    @property
    def total(self):
        return int(self.counts.sum())

    def row_sums(self):
        return self.counts.sum(axis=1)

    def __add__(self, other):
        return ConfusionMatrix(self.counts + other.counts)

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)


def per_class_accuracy(cm):
    """Per-class accuracy in percent (2 decimals); ``None`` for a class with no test images."""
    rows = cm.row_sums()
    return [None if rows[i] == 0 else percent(cm.counts[i, i], rows[i]) for i in range(N)]


def overall_accuracy(cm):
    if cm.total == 0:
        raise EvaluationError("overall accuracy of an empty confusion matrix is undefined")
    return percent(np.trace(cm.counts), cm.total)


def predict_labels(probs):
    """Argmax with ties going to the lowest class index. Returns (labels, n_ties)."""
    probs = np.asarray(probs)
    labels = probs.argmax(axis=1)  # first maximum = lowest index
    top = probs.max(axis=1, keepdims=True)
    ties = int(((probs == top).sum(axis=1) > 1).sum())
    return labels, ties


def evaluate_arrays(model, images, labels, batch_size=64):
    """Confusion matrix of ``model`` over in-memory images; shards are summed in order."""
    cm = ConfusionMatrix.empty()
    ties = 0
    for i in range(0, len(images), batch_size):
        pred, t = predict_labels(model.predict_proba(images[i : i + batch_size], batch_size))
        cm = cm + ConfusionMatrix.from_predictions(labels[i : i + batch_size], pred)
        ties += t
    if ties:
        log.info("%d argmax ties resolved to the lowest class index", ties)
    return cm


def evaluate(model, samples, image_dir, batch_size=64):
    """Confusion matrix over ``samples`` read from a stage directory (faces or products)."""
    from .train import load_images

    try:
        x, y = load_images(samples, image_dir)
    except FileNotFoundError as exc:
        raise EvaluationError(str(exc)) from None
    return evaluate_arrays(model, x, y, batch_size)


# --- files -----------------------------------------------------------------

def _fmt_pct(v):
    return UNDEFINED if v is None else f"{v:.2f}"


def confusion_csv(cm):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([CORNER, *CLASS_NAMES])
    for name, row in zip(CLASS_NAMES, cm.counts):
        w.writerow([name, *map(int, row)])
    w.writerow([ACCURACY_ROW, *map(_fmt_pct, per_class_accuracy(cm))])
    return buf.getvalue()


def parse_confusion_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0][1:]) != CLASS_NAMES:
        raise EvaluationError("confusion CSV header does not list the 7 classes in canonical order")
    body = [r for r in rows[1:] if r and r[0] != ACCURACY_ROW]
    if [r[0] for r in body] != list(CLASS_NAMES):
        raise EvaluationError("confusion CSV rows are not the 7 classes in canonical order")
    try:
        return ConfusionMatrix(np.array([[int(v) for v in r[1:]] for r in body]))
    except ValueError as exc:
        raise EvaluationError(f"bad confusion CSV: {exc}") from None


def read_confusion_csv(path):
    return parse_confusion_csv(Path(path).read_text(encoding="utf-8"))


def per_class_csv(cm):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["emotion", "correct", "total", "accuracy"])
    rows = cm.row_sums()
    for i, (name, acc) in enumerate(zip(CLASS_NAMES, per_class_accuracy(cm))):
        w.writerow([name, int(cm.counts[i, i]), int(rows[i]), _fmt_pct(acc)])
    w.writerow(["overall", int(np.trace(cm.counts)), cm.total,
                _fmt_pct(overall_accuracy(cm) if cm.total else None)])
    return buf.getvalue()


def plot_training_curve(records, path):
    """Training loss, validation loss and validation accuracy against epoch."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not records:
        raise ValueError("no epoch records to plot")
    epochs = [r.epoch for r in records]
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.plot(epochs, [r.train_loss for r in records], label="train loss", marker="." if len(epochs) < 3 else None)
    ax.plot(epochs, [r.val_loss for r in records], label="val loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax2 = ax.twinx()
    ax2.plot(epochs, [r.val_acc for r in records], color="tab:green", label="val accuracy")
    ax2.set_ylabel("accuracy")
    ax2.set_ylim(0.0, 1.0)
    lo, hi = min(epochs), max(epochs)
    ax.set_xlim(lo, hi if hi > lo else lo + 1)
    lines = ax.get_lines() + ax2.get_lines()
    ax.legend(lines, [ln.get_label() for ln in lines], loc="center right")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return ax.get_xlim()


def render_reports(cm, records, out_dir):
    """Write confusion.csv, per_class.csv, and (with records) epochs.csv and curve.png."""
    from .train import records_csv

    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "confusion.csv").write_text(confusion_csv(cm), encoding="utf-8")
        (out_dir / "per_class.csv").write_text(per_class_csv(cm), encoding="utf-8")
        if records:
            (out_dir / "epochs.csv").write_text(records_csv(records), encoding="utf-8")
            plot_training_curve(records, out_dir / "curve.png")
    except OSError as exc:
        raise EvaluationError(f"cannot write reports to {out_dir}: {exc}") from None
    return out_dir


def format_matrix(cm):
    width = max(9, max(len(n) for n in CLASS_NAMES) + 1)
    lines = ["".ljust(width) + "".join(n[:8].rjust(9) for n in CLASS_NAMES) + "  per-class"]
    for name, row, acc in zip(CLASS_NAMES, cm.counts, per_class_accuracy(cm)):
        lines.append(name.ljust(width) + "".join(str(v).rjust(9) for v in row) + "  " + _fmt_pct(acc))
    return "\n".join(lines)
