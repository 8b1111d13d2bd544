"""Face detection, cropping, and 256x256 grayscale normalization."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .cascade import HaarCascade
from .imaging import load_image, resize_bilinear, to_gray, to_uint8

log = logging.getLogger(__name__)

FACE_SIZE = 256
MIN_BOX = 8
DETECT_MAX_SIDE = 640


class NoFaceFound(Exception):
    def __init__(self, path=None):
        self.path = path
        super().__init__(f"no face detected in {path}" if path else "no face detected")


class DetectorError(Exception):
    pass


@dataclass(frozen=True)
class FaceBox:
    x: int
    y: int
    w: int
    h: int
    score: float = 0.0

    @property
    def area(self):
        return self.w * self.h

    def iou(self, other):
        ix = max(0, min(self.x + self.w, other.x + other.w) - max(self.x, other.x))
        iy = max(0, min(self.y + self.h, other.y + other.h) - max(self.y, other.y))
        inter = ix * iy
        union = self.area + other.area - inter
        return inter / union if union else 0.0

    @classmethod
    def full_frame(cls, image):
        h, w = np.asarray(image).shape[:2]
        return cls(0, 0, w, h, 0.0)


class CascadeDetector:
    """Viola-Jones style detector on the bundled (or a user-supplied) Haar cascade."""

    def __init__(self, cascade_path=None, scale_factor=1.1, min_neighbors=3, min_size=30):
        self.cascade = HaarCascade.load(cascade_path)
        self.scale_factor = scale_factor
        self.min_neighbors = min_neighbors
        self.min_size = min_size

    def __call__(self, gray):
        h, w = gray.shape
        scale = max(h, w) / DETECT_MAX_SIDE
        if scale > 1.0:
            small = to_uint8(resize_bilinear(gray, int(round(h / scale)), int(round(w / scale))))
        else:
            scale, small = 1.0, gray
        found = self.cascade.detect_multiscale(
            small, self.scale_factor, self.min_neighbors, (self.min_size, self.min_size))
        boxes = []
        for x, y, bw, bh, n in found:
            x0 = max(0, int(round(x * scale)))
            y0 = max(0, int(round(y * scale)))
            x1 = min(w, int(round((x + bw) * scale)))
            y1 = min(h, int(round((y + bh) * scale)))
            if x1 > x0 and y1 > y0:
                boxes.append(FaceBox(x0, y0, x1 - x0, y1 - y0, float(n)))
        return boxes


DETECTORS = {"cascade": CascadeDetector}


@lru_cache(maxsize=8)
def get_detector(backend="cascade", cascade_path=None):
    try:
        factory = DETECTORS[backend]
    except KeyError:
        raise DetectorError(f"unknown detector {backend!r}; known: {', '.join(sorted(DETECTORS))}") from None
    return factory(cascade_path) if cascade_path else factory()


def detect_face(image, detector="cascade", path=None, cascade_path=None):
    """Largest face box in ``image`` (ties: higher score, then top-left first)."""
    det = get_detector(detector, cascade_path) if isinstance(detector, str) else detector
    boxes = det(to_gray(image))
    if not boxes:
        raise NoFaceFound(path)
    return min(boxes, key=lambda b: (-b.area, -b.score, b.y, b.x))


def crop_resize_gray(image, box, size=FACE_SIZE):
    """Crop ``box`` from ``image``, convert to BT.601 gray, bilinear-resize to ``size`` x ``size``."""
    image = np.asarray(image)
    h, w = image.shape[:2]
    if box.w < MIN_BOX or box.h < MIN_BOX:
        raise ValueError(f"face box {box.w}x{box.h} is smaller than {MIN_BOX}x{MIN_BOX}")
    if box.x < 0 or box.y < 0 or box.x + box.w > w or box.y + box.h > h:
        raise ValueError(f"face box {box} is not inside the {w}x{h} image")
    crop = image[box.y : box.y + box.h, box.x : box.x + box.w]
    gray = to_gray(crop)
    return to_uint8(resize_bilinear(gray, size, size))


def preprocess_file(path, on_no_face="skip", detector="cascade", cascade_path=None):
    """Load, detect, crop. Returns the 256x256 face, or None when skipped."""
    image = load_image(path)
    try:
        box = detect_face(image, detector, path=str(path), cascade_path=cascade_path)
    except NoFaceFound:
        if on_no_face == "skip":
            log.info("no face in %s; skipped", path)
            return None
        if on_no_face != "full-frame":
            raise
        log.info("no face in %s; using full frame", path)
        box = FaceBox.full_frame(image)
    return crop_resize_gray(image, box)
