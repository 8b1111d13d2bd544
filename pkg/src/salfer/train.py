"""SGD fine-tuning with a per-epoch linear learning-rate decay."""
from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imaging import load_image
from .nn import layers

log = logging.getLogger(__name__)

VARIANTS = ("plain", "saliency_product")
VARIANT_DIRS = {"plain": "faces", "saliency_product": "products"}
RECORD_COLUMNS = ("epoch", "lr", "train_loss", "val_loss", "val_acc", "seconds")


class TrainingError(Exception):
    pass


@dataclass
class TrainConfig:
    base_lr: float = 0.01
    epochs: int = 100
    lr_decay: str = "linear"
    batch_size: int = 32
    momentum: float = 0.9
    weight_decay: float = 0.0
    seed: int = 0
    input_variant: str = "plain"
    dropout_p: float = 0.5
    backbone: str = "reference"
    backbone_weights: str | None = None
    freeze_backbone: bool = False

    def __post_init__(self):
        if not self.base_lr > 0:
            raise ValueError(f"base_lr must be positive, got {self.base_lr}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lr_decay not in ("linear", "none"):
            raise ValueError(f"lr_decay must be 'linear' or 'none', got {self.lr_decay!r}")
        if self.input_variant not in VARIANTS:
            raise ValueError(f"input_variant must be one of {VARIANTS}, got {self.input_variant!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")

    def to_text(self):
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {'' if v is None else v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, **overrides):
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or key not in types:
                raise ValueError(f"config line {lineno}: unknown or malformed entry {raw!r}")
            values[key] = _coerce(types[key], value)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @classmethod
    def load(cls, path, **overrides):
        return cls.from_text(Path(path).read_text(encoding="utf-8"), **overrides)


def _coerce(kind, value):
    kind = str(kind)
    if "bool" in kind:
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if "None" in kind and value == "":
        return None
    if kind.startswith("int"):
        return int(value)
    if kind.startswith("float"):
        return float(value)
    return value


def lr_schedule(config, epoch):
    """Learning rate for a 0-based epoch: ``base_lr * (1 - epoch / epochs)`` under linear decay."""
    if not 0 <= epoch < config.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {config.epochs})")
    if config.lr_decay == "none":
        return config.base_lr
    return config.base_lr * (1.0 - epoch / config.epochs)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float
    val_acc: float
    seconds: float


@dataclass
class TrainResult:
    model: object
    best_model: object
    records: list = field(default_factory=list)
    best_epoch: int | None = None
    steps: int = 0


def _fmt(v):
    if isinstance(v, float) and math.isnan(v):
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def records_csv(records, include_time=True):
    cols = RECORD_COLUMNS if include_time else RECORD_COLUMNS[:-1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in records:
        w.writerow([_fmt(getattr(r, c)) for c in cols])
    return buf.getvalue()


def write_records(records, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(records_csv(records), encoding="utf-8")


def read_records(path):
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            num = lambda s: float(s) if s != "" else float("nan")  # noqa: E731
            out.append(EpochRecord(int(row["epoch"]), num(row["lr"]), num(row["train_loss"]),
                                   num(row["val_loss"]), num(row["val_acc"]), num(row.get("seconds", ""))))
    return out


def evaluate_loss_acc(model, images, labels, batch_size=64):
    if len(images) == 0:
        return float("nan"), float("nan")
    probs = model.predict_proba(images, batch_size)
    labels = np.asarray(labels)
    loss = float(layers.cross_entropy(probs, labels).mean())
    acc = float((probs.argmax(axis=1) == labels).mean())
    return loss, acc


def fit(model, x_train, y_train, x_val=None, y_val=None, config=None, on_epoch=None):
    """Mini-batch SGD with momentum over in-memory uint8 images."""
    config = config or TrainConfig()
    x_train = np.asarray(x_train)
    y_train = np.asarray(y_train, dtype=np.intp)
    n = len(x_train)
    if n == 0:
        raise TrainingError("training set is empty")
    if x_val is None:
        x_val, y_val = np.zeros((0,) + x_train.shape[1:], np.uint8), np.zeros(0, np.intp)
    if model.backbone.uses_mean:
        model.input_mean = float(x_train.mean(dtype=np.float64) / 255.0)
    if config.freeze_backbone:
        model.freeze("backbone")

    rng = np.random.default_rng(config.seed)
    velocity = {k: np.zeros_like(v) for k, v in model.params.items() if k in model.trainable}
    result = TrainResult(model=model, best_model=None)
    best_acc = -1.0
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        lr = lr_schedule(config, epoch)
        order = rng.permutation(n)
        total = 0.0
        for bi, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            logits = model.forward(x_train[idx], "train", rng)
            if not np.isfinite(logits).all():
                raise TrainingError(f"non-finite logits at epoch {epoch}, batch {bi}, lr {lr}")
            loss, grads = model.backward(y_train[idx])
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, batch {bi}, lr {lr}")
            params = model.params
            for name, g in grads.items():
                if config.weight_decay:
                    g = g + config.weight_decay * params[name]
                v = velocity[name]
                v *= config.momentum
                v -= lr * g
                params[name] += v
            total += loss * len(idx)
            result.steps += 1
        val_loss, val_acc = evaluate_loss_acc(model, x_val, y_val)
        rec = EpochRecord(epoch, lr, total / n, val_loss, val_acc, time.perf_counter() - t0)
        result.records.append(rec)
        log.info("epoch %d lr %.6g train_loss %.4f val_loss %.4f val_acc %.4f",
                 epoch, lr, rec.train_loss, val_loss, val_acc)
        if not math.isnan(val_acc) and val_acc > best_acc:
            best_acc = val_acc
            result.best_model = model.copy()
            result.best_epoch = epoch
        if on_epoch is not None:
            on_epoch(rec)
    if result.best_model is None:
        result.best_model = model
        result.best_epoch = config.epochs - 1
    return result


def load_images(samples, image_dir):
    """Stack preprocessed 256x256 images for ``samples`` from a stage directory."""
    image_dir = Path(image_dir)
    paths = [image_dir / s.output_key() for s in samples]
    missing = [str(p) for p in paths if not p.is_file()]
    if missing:
        shown = ", ".join(missing[:5]) + (" ..." if len(missing) > 5 else "")
        raise FileNotFoundError(f"{len(missing)} preprocessed images missing: {shown}")
    if not paths:
        return np.zeros((0, 256, 256), np.uint8), np.zeros(0, np.intp)
    x = np.stack([load_image(p) for p in paths])
    y = np.array([int(s.emotion) for s in samples], dtype=np.intp)
    return x, y


def available(samples, image_dir):
    """Samples whose preprocessed image exists (faces skipped by the detector drop out)."""
    image_dir = Path(image_dir)
    return tuple(s for s in samples if (image_dir / s.output_key()).is_file())


def train(model, manifest, config, work_dir):
    """Train on ``manifest.train`` (validating on ``manifest.val``) from ``work_dir/<variant dir>``."""
    image_dir = Path(work_dir) / VARIANT_DIRS[config.input_variant]
    train_s = available(manifest.train, image_dir)
    val_s = available(manifest.val, image_dir)
    dropped = len(manifest.train) + len(manifest.val) - len(train_s) - len(val_s)
    if dropped:
        log.warning("%d manifest images have no preprocessed face and are left out", dropped)
    if not train_s:
        raise TrainingError(f"no preprocessed training images under {image_dir}")
    x, y = load_images(train_s, image_dir)
    xv, yv = load_images(val_s, image_dir)
    return fit(model, x, y, xv, yv, config)


__all__ = [
    "EpochRecord", "TrainConfig", "TrainResult", "TrainingError", "fit", "lr_schedule",
    "load_images", "read_records", "records_csv", "train", "write_records",
]
