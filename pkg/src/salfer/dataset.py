"""Labeled image discovery, the 7-emotion taxonomy, and reproducible split manifests."""
from __future__ import annotations

import csv
import enum
import io
import logging
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


class Emotion(enum.IntEnum):
    """The seven basic expressions, in confusion-matrix row/column order."""

    ANGRY = 0
    DISGUSTED = 1
    FEARFUL = 2
    HAPPY = 3
    NEUTRAL = 4
    SAD = 5
    SURPRISED = 6

    @property
    def label(self):
        return self.name.capitalize()

    @classmethod
    def parse(cls, text):
        key = str(text).strip().lower()
        try:
            return _ALIASES[key]
        except KeyError:
            raise ValueError(f"not one of the 7 basic emotions: {text!r}") from None


_ALIASES = {
    "angry": Emotion.ANGRY, "anger": Emotion.ANGRY,
    "disgusted": Emotion.DISGUSTED, "disgust": Emotion.DISGUSTED,
    "fearful": Emotion.FEARFUL, "fear": Emotion.FEARFUL, "afraid": Emotion.FEARFUL,
    "happy": Emotion.HAPPY, "happiness": Emotion.HAPPY,
    "neutral": Emotion.NEUTRAL,
    "sad": Emotion.SAD, "sadness": Emotion.SAD,
    "surprised": Emotion.SURPRISED, "surprise": Emotion.SURPRISED,
}

CLASS_NAMES = tuple(e.label for e in Emotion)


class Gaze(str, enum.Enum):
    FRONT = "front"
    LEFT = "left"
    RIGHT = "right"


class Policy(str, enum.Enum):
    BY_IMAGE = "by-image"
    BY_SUBJECT = "by-subject"
    FULL_TRAIN = "full-train"


class DatasetError(Exception):
    pass


class ManifestError(DatasetError):
    pass


@dataclass(frozen=True, order=True)
class ImageSample:
    image_path: str
    dataset_id: str
    subject_id: str
    emotion: Emotion
    gaze: Gaze | None = None

    @property
    def stem(self):
        return Path(self.image_path).stem

    def output_key(self, suffix=".png"):
        """Stage-output path relative to a stage directory: ``<dataset>/<Emotion>/<stem>.png``."""
        return f"{self.dataset_id}/{self.emotion.label}/{self.stem}{suffix}"


# --- layouts -------------------------------------------------------------

class ExcludedFile(Exception):
    """Parseable file that is deliberately outside the 7-emotion scope."""


def _parse_cfee(path: Path, root: Path):
    # <root>/<Emotion>/<subject>_<anything>.<ext>
    rel = path.relative_to(root)
    if len(rel.parts) < 2:
        raise ValueError("expected <emotion>/<file>")
    folder = rel.parts[-2]
    try:
        emotion = Emotion.parse(folder)
    except ValueError:
        raise ExcludedFile(folder) from None
    subject = path.stem.split("_", 1)[0]
    if not subject:
        raise ValueError("empty subject prefix")
    return subject, emotion, None


_RAFD_RE = re.compile(
    r"^Rafd(?P<angle>\d{3})_(?P<subject>\d+)_[^_]+_[^_]+_(?P<emotion>[a-z]+)_(?P<gaze>frontal|left|right)$",
    re.IGNORECASE,
)
_RAFD_GAZE = {"frontal": Gaze.FRONT, "left": Gaze.LEFT, "right": Gaze.RIGHT}


def _parse_rafd(path: Path, root: Path, angle="090"):
    # Rafd090_01_Caucasian_female_angry_frontal.jpg, anywhere under root
    m = _RAFD_RE.match(path.stem)
    if m is None:
        raise ValueError("not a Rafd<angle>_<subject>_<group>_<gender>_<emotion>_<gaze> name")
    if m["angle"] != angle:
        raise ExcludedFile(f"camera angle {m['angle']}")
    try:
        emotion = Emotion.parse(m["emotion"])
    except ValueError:
        raise ExcludedFile(m["emotion"]) from None
    return m["subject"], emotion, _RAFD_GAZE[m["gaze"].lower()]


LAYOUTS = {
    "cfee": _parse_cfee,
    "rafd": _parse_rafd,
}


@dataclass
class ScanReport:
    samples: list
    skipped: list = field(default_factory=list)
    excluded: int = 0

    @property
    def class_counts(self):
        counts = [0] * len(Emotion)
        for s in self.samples:
            counts[s.emotion] += 1
        return counts

    @property
    def n_subjects(self):
        return len({s.subject_id for s in self.samples})

    def summary(self):
        per = ", ".join(f"{e.label}={c}" for e, c in zip(Emotion, self.class_counts))
        return (f"{len(self.samples)} images, {self.n_subjects} subjects ({per}); "
                f"{len(self.skipped)} skipped, {self.excluded} excluded")


def _decodes(path):
    try:
        with Image.open(path) as im:
            im.verify()
        return True
    except Exception:
        return False


def scan_dataset(root, layout, dataset_id=None, verify=True):
    """Discover labeled images under ``root`` using a registered layout.

    Returns a :class:`ScanReport`; ``report.samples`` is sorted by path.
    Files whose names do not parse (or do not decode) are skipped with a warning;
    files outside the 7 basic emotions are counted as excluded.
    """
    root = Path(root)
    if layout not in LAYOUTS:
        raise DatasetError(f"unknown layout {layout!r}; known: {', '.join(sorted(LAYOUTS))}")
    if not root.is_dir():
        raise DatasetError(f"dataset root is not a readable directory: {root}")
    parse = LAYOUTS[layout]
    dataset_id = dataset_id or layout
    report = ScanReport(samples=[])
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        if path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        try:
            subject, emotion, gaze = parse(path, root)
        except ExcludedFile:
            report.excluded += 1
            continue
        except ValueError as exc:
            log.warning("skipping %s: %s", path, exc)
            report.skipped.append(str(path))
            continue
        if verify and not _decodes(path):
            log.warning("skipping %s: does not decode as an image", path)
            report.skipped.append(str(path))
            continue
        report.samples.append(ImageSample(str(path), dataset_id, subject, emotion, gaze))
    if not report.samples:
        log.warning("no labeled images found under %s (layout %s)", root, layout)
    if report.skipped:
        log.warning("%d files skipped under %s", len(report.skipped), root)
    return report


# --- splits --------------------------------------------------------------

@dataclass(frozen=True)
class SplitManifest:
    train: tuple
    val: tuple
    test: tuple
    ratios: tuple
    policy: Policy
    seed: int
    missing: tuple = field(default=(), compare=False)

    def __post_init__(self):
        _check_disjoint(self.train, self.val, self.test)
        if self.policy is Policy.BY_SUBJECT:
            seen = {}
            for name in ("train", "val", "test"):
                for s in getattr(self, name):
                    if seen.setdefault(s.subject_id, name) != name:
                        raise ManifestError(f"subject {s.subject_id} appears in both {seen[s.subject_id]} and {name}")

    @property
    def sizes(self):
        return len(self.train), len(self.val), len(self.test)

    def split(self, name):
        if name not in ("train", "val", "test"):
            raise KeyError(name)
        return getattr(self, name)

    def all_samples(self):
        return self.train + self.val + self.test


def _check_disjoint(*parts):
    seen = set()
    for part in parts:
        for s in part:
            if s.image_path in seen:
                raise ManifestError(f"image listed in more than one split: {s.image_path}")
            seen.add(s.image_path)


def split_sizes(n, ratios):
    """Largest-remainder apportionment of ``n`` items; ties go to train, then val, then test."""
    fr = [Fraction(r).limit_denominator(10**9) for r in ratios]
    exact = [f * n for f in fr]
    sizes = [math.floor(e) for e in exact]
    rem = n - sum(sizes)
    order = sorted(range(len(sizes)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[:rem]:
        sizes[i] += 1
    return tuple(sizes)


def _check_ratios(ratios):
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3:
        raise ValueError(f"need three ratios (train, val, test), got {len(ratios)}")
    if any(r < 0 for r in ratios):
        raise ValueError(f"ratios must be non-negative: {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1 (got {sum(ratios)!r})")
    return ratios


def make_split(samples, ratios=(0.7, 0.15, 0.15), policy="by-image", seed=0):
    """Partition ``samples`` into train/val/test.

    by-image shuffles images and cuts at the apportioned sizes. by-subject
    shuffles subjects and fills splits first-fit against the same image-count
    targets, giving an overflowing subject to the split with the most room left.
    """
    policy = Policy(policy)
    samples = tuple(samples)
    if not samples:
        raise DatasetError("cannot split an empty sample list")
    ratios = _check_ratios(ratios)
    rng = np.random.default_rng(seed)

    if policy is Policy.FULL_TRAIN:
        return SplitManifest(samples, (), (), (1.0, 0.0, 0.0), policy, seed)

    targets = split_sizes(len(samples), ratios)
    if policy is Policy.BY_IMAGE:
        order = rng.permutation(len(samples))
        a, b = targets[0], targets[0] + targets[1]
        parts = [order[:a], order[a:b], order[b:]]
        parts = [tuple(samples[i] for i in p) for p in parts]
        return SplitManifest(*parts, ratios, policy, seed)

    by_subject = {}
    for s in samples:
        by_subject.setdefault(s.subject_id, []).append(s)
    subjects = sorted(by_subject)
    needed = sum(1 for t in targets if t > 0)
    if len(subjects) < needed:
        raise DatasetError(f"by-subject split needs at least {needed} subjects, found {len(subjects)}")
    subjects = [subjects[i] for i in rng.permutation(len(subjects))]
    parts = [[], [], []]
    room = list(targets)
    for subj in subjects:
        imgs = by_subject[subj]
        dest = next((i for i in range(3) if room[i] >= len(imgs)), None)
        if dest is None:
            dest = max(range(3), key=lambda i: (room[i], -i))
        parts[dest].extend(imgs)
        room[dest] -= len(imgs)
    return SplitManifest(*(tuple(p) for p in parts), ratios, policy, seed)


# --- manifest files -------------------------------------------------------

MANIFEST_COLUMNS = ("dataset_id", "subject_id", "emotion", "gaze", "split", "path")


def dumps_manifest(manifest):
    buf = io.StringIO(newline="")
    buf.write(f"# policy={manifest.policy.value}\n")
    buf.write(f"# seed={manifest.seed}\n")
    buf.write("# ratios=" + ",".join(repr(float(r)) for r in manifest.ratios) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_COLUMNS)
    for name in ("train", "val", "test"):
        for s in manifest.split(name):
            w.writerow((s.dataset_id, s.subject_id, s.emotion.label,
                        s.gaze.value if s.gaze else "", name, s.image_path))
    return buf.getvalue()


def save_manifest(manifest, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(dumps_manifest(manifest))


def load_manifest(path):
    """Parse a manifest file; missing image files are reported in ``manifest.missing``."""
    path = Path(path)
    meta = {}
    rows = {"train": [], "val": [], "test": []}
    header = None
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition("=")
                if not sep:
                    raise ManifestError(f"{path}:{lineno}: malformed metadata line")
                meta[key.strip()] = value.strip()
                continue
            fields = next(csv.reader([line]))
            if header is None:
                if tuple(fields) != MANIFEST_COLUMNS:
                    raise ManifestError(f"{path}:{lineno}: expected header {','.join(MANIFEST_COLUMNS)}")
                header = fields
                continue
            if len(fields) != len(MANIFEST_COLUMNS):
                raise ManifestError(f"{path}:{lineno}: expected {len(MANIFEST_COLUMNS)} fields, got {len(fields)}")
            ds, subj, emo, gaze, split, img = fields
            try:
                sample = ImageSample(img, ds, subj, Emotion.parse(emo), Gaze(gaze) if gaze else None)
            except ValueError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from None
            if split not in rows:
                raise ManifestError(f"{path}:{lineno}: unknown split {split!r}")
            rows[split].append(sample)
    if header is None:
        raise ManifestError(f"{path}: no header line")
    try:
        policy = Policy(meta.get("policy", "by-image"))
        seed = int(meta.get("seed", "0"))
        ratios = tuple(float(r) for r in meta.get("ratios", "0.7,0.15,0.15").split(","))
    except ValueError as exc:
        raise ManifestError(f"{path}: bad metadata: {exc}") from None
    missing = tuple(s.image_path for part in rows.values() for s in part if not Path(s.image_path).exists())
    if missing:
        log.warning("%s: %d referenced images are missing", path, len(missing))
    return SplitManifest(tuple(rows["train"]), tuple(rows["val"]), tuple(rows["test"]),
                         ratios, policy, seed, missing)
