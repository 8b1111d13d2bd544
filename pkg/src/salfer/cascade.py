"""Boosted Haar-feature cascade (Viola-Jones) evaluator.

Reads the OpenCV ``opencv-cascade-classifier`` XML format (stump or tree weak
classifiers, upright features) and scans an image pyramid with the compiled
or numpy kernel from :mod:`salfer.kernels`.
"""
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
import xml.etree.ElementTree as ET

import numpy as np

from . import kernels
from .imaging import resize_bilinear, round_half_up

DEFAULT_CASCADE = "haarcascade_frontalface_default.xml"


class CascadeFormatError(ValueError):
    pass


def default_cascade_path():
    return Path(str(resources.files("salfer") / "data" / DEFAULT_CASCADE))


def _floats(text):
    return [float(t) for t in text.split()]


@dataclass
class HaarCascade:
    win_w: int
    win_h: int
    stage_thr: np.ndarray
    stage_first: np.ndarray
    stage_count: np.ndarray
    weak_node: np.ndarray
    weak_leaf: np.ndarray
    node_left: np.ndarray
    node_right: np.ndarray
    node_feat: np.ndarray
    node_thr: np.ndarray
    leaves: np.ndarray
    rects: np.ndarray
    weights: np.ndarray

    @classmethod
    def load(cls, path=None):
        path = Path(path) if path is not None else default_cascade_path()
        if not path.is_file():
            raise FileNotFoundError(f"cascade file not found: {path}")
        root = ET.parse(path).getroot()
        casc = root.find("cascade")
        if casc is None:
            raise CascadeFormatError(f"{path}: no <cascade> element (old-style cascades are not supported)")
        if (casc.findtext("featureType") or "").strip().upper() != "HAAR":
            raise CascadeFormatError(f"{path}: only HAAR cascades are supported")
        win_w = int(casc.findtext("width"))
        win_h = int(casc.findtext("height"))

        stage_thr, stage_first, stage_count = [], [], []
        weak_node, weak_leaf = [], []
        node_left, node_right, node_feat, node_thr, leaves = [], [], [], [], []
        for stage in casc.find("stages"):
            stage_thr.append(float(stage.findtext("stageThreshold")))
            stage_first.append(len(weak_node))
            weaks = list(stage.find("weakClassifiers"))
            stage_count.append(len(weaks))
            for weak in weaks:
                nodes = _floats(weak.findtext("internalNodes"))
                if len(nodes) % 4:
                    raise CascadeFormatError(f"{path}: internalNodes length not a multiple of 4")
                weak_node.append(len(node_left))
                weak_leaf.append(len(leaves))
                for i in range(0, len(nodes), 4):
                    node_left.append(int(nodes[i]))
                    node_right.append(int(nodes[i + 1]))
                    node_feat.append(int(nodes[i + 2]))
                    node_thr.append(nodes[i + 3])
                leaves.extend(_floats(weak.findtext("leafValues")))

        feats = list(casc.find("features")) if casc.find("features") is not None else list(root.find("features"))
        rects = np.zeros((len(feats), 3, 4), dtype=np.int64)
        weights = np.zeros((len(feats), 3), dtype=np.float64)
        for fi, feat in enumerate(feats):
            if (feat.findtext("tilted") or "0").strip() not in ("0", ""):
                raise CascadeFormatError(f"{path}: tilted features are not supported")
            rs = list(feat.find("rects"))
            if len(rs) > 3:
                raise CascadeFormatError(f"{path}: feature {fi} has more than 3 rects")
            for ri, r in enumerate(rs):
                vals = _floats(r.text)
                rects[fi, ri] = [int(v) for v in vals[:4]]
                weights[fi, ri] = vals[4]

        i64 = lambda a: np.asarray(a, dtype=np.int64)  # noqa: E731
        f64 = lambda a: np.asarray(a, dtype=np.float64)  # noqa: E731
        return cls(win_w, win_h, f64(stage_thr), i64(stage_first), i64(stage_count),
                   i64(weak_node), i64(weak_leaf), i64(node_left), i64(node_right),
                   i64(node_feat), f64(node_thr), f64(leaves), rects, weights)

    def scan(self, gray, step, kernels=kernels):
        """Accepted window origins at native scale of ``gray`` (float or uint8 2-D array).

        ``kernels`` picks the backend module (default: the one selected at import).
        """
        g = np.asarray(gray, dtype=np.float64)
        ii = np.zeros((g.shape[0] + 1, g.shape[1] + 1), dtype=np.float64)
        sq = np.zeros_like(ii)
        ii[1:, 1:] = g.cumsum(0).cumsum(1)
        sq[1:, 1:] = (g * g).cumsum(0).cumsum(1)
        return kernels.cascade_scan(
            ii, sq, int(step), self.win_w, self.win_h, self.stage_thr, self.stage_first,
            self.stage_count, self.weak_node, self.weak_leaf, self.node_left, self.node_right,
            self.node_feat, self.node_thr, self.leaves, self.rects, self.weights)

    def detect_multiscale(self, gray, scale_factor=1.1, min_neighbors=3, min_size=(30, 30), max_size=None):
        """All grouped detections as a list of (x, y, w, h, neighbors), in source pixels."""
        gray = np.asarray(gray)
        h, w = gray.shape
        raw = []
        factor = 1.0
        while True:
            win_w = int(round(self.win_w * factor))
            win_h = int(round(self.win_h * factor))
            sw = int(round(w / factor))
            sh = int(round(h / factor))
            if sw < self.win_w or sh < self.win_h:
                break
            if max_size is not None and (win_w > max_size[0] or win_h > max_size[1]):
                break
            if win_w >= min_size[0] and win_h >= min_size[1]:
                level = gray if factor == 1.0 else round_half_up(resize_bilinear(gray, sh, sw))
                step = 1 if factor > 2.0 else 2
                for x, y in self.scan(level, step):
                    raw.append((int(round(x * factor)), int(round(y * factor)), win_w, win_h))
            factor *= scale_factor
        return group_rectangles(raw, min_neighbors)


def _similar(a, b, eps):
    delta = eps * (min(a[2], b[2]) + min(a[3], b[3])) * 0.5
    return (abs(a[0] - b[0]) <= delta and abs(a[1] - b[1]) <= delta
            and abs(a[0] + a[2] - b[0] - b[2]) <= delta
            and abs(a[1] + a[3] - b[1] - b[3]) <= delta)


def group_rectangles(rects, group_threshold, eps=0.2):
    """Cluster overlapping raw windows and keep clusters with more than ``group_threshold`` members.

    Follows the usual cascade post-processing: average each cluster, then drop
    small clusters nested inside a much stronger one.
    """
    n = len(rects)
    if n == 0:
        return []
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if _similar(rects[i], rects[j], eps):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    clusters = {}
    for i in range(n):
        clusters.setdefault(find(i), []).append(rects[i])
    avg = []
    for members in clusters.values():
        k = len(members)
        if k <= group_threshold:
            continue
        s = np.sum(np.asarray(members, dtype=np.float64), axis=0)
        avg.append((int(round(s[0] / k)), int(round(s[1] / k)),
                    int(round(s[2] / k)), int(round(s[3] / k)), k))

    out = []
    for i, r1 in enumerate(avg):
        nested = False
        for j, r2 in enumerate(avg):
            if i == j:
                continue
            dx = int(round(r2[2] * eps))
            dy = int(round(r2[3] * eps))
            if (r2[4] > max(3, r1[4]) and r1[0] >= r2[0] - dx and r1[1] >= r2[1] - dy
                    and r1[0] + r1[2] <= r2[0] + r2[2] + dx and r1[1] + r1[3] <= r2[1] + r2[3] + dy):
                nested = True
                break
        if not nested:
            out.append(r1)
    return out
