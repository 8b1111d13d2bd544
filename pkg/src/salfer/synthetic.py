"""Procedurally drawn face datasets shaped like CFEE and RaFD.

The real datasets are licensed and cannot ship; these fixtures exercise the
same directory layouts, counts, and pipeline stages. Faces are drawn so that
the bundled frontal-face cascade fires on them, and each drawing records its
ground-truth face rectangle. A ``SYNTHETIC`` marker file in the dataset root
lets reports tag their provenance.
"""
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw
from scipy.ndimage import gaussian_filter

from .dataset import Emotion, Gaze, ImageSample

MARKER = "SYNTHETIC"

# per-emotion drawing parameters:
# mouth curve (+ smile / - frown), mouth opening, brow tilt (+ inner-down), brow lift, eye openness
_EXPRESSION = {
    Emotion.ANGRY: (0.0, 0.0, 1.0, -0.03, 0.7),
    Emotion.DISGUSTED: (-0.4, 0.15, 0.6, -0.02, 0.6),
    Emotion.FEARFUL: (-0.2, 0.5, -0.6, 0.06, 1.4),
    Emotion.HAPPY: (1.0, 0.2, 0.0, 0.0, 0.9),
    Emotion.NEUTRAL: (0.0, 0.0, 0.0, 0.0, 1.0),
    Emotion.SAD: (-1.0, 0.0, -1.0, 0.02, 0.8),
    Emotion.SURPRISED: (0.0, 1.0, 0.0, 0.09, 1.5),
}


def _subject_traits(subject):
    r = np.random.default_rng(10_007 + subject)
    return {
        "face_w": r.uniform(0.55, 0.66),
        "face_h": r.uniform(0.70, 0.80),
        "skin": r.uniform(150, 215),
        "bg": r.uniform(60, 110),
        "eye_gap": r.uniform(0.20, 0.24),
        "tint": r.uniform(0.85, 1.0, size=3),
    }


def render_face(emotion, subject=0, gaze=None, size=200, seed=0, color=True):
    """Draw one face. Returns ``(image, (x, y, w, h))`` with the face-ellipse bounding box."""
    emotion = Emotion(emotion)
    t = _subject_traits(int(subject))
    rng = np.random.default_rng(seed)
    mouth_curve, mouth_open, brow_tilt, brow_lift, eye_open = _EXPRESSION[emotion]

    fw = int(round(size * t["face_w"]))
    fh = int(round(size * t["face_h"]))
    fx = (size - fw) // 2 + int(rng.integers(-size // 40, size // 40 + 1))
    fy = (size - fh) // 2 + int(rng.integers(-size // 40, size // 40 + 1))
    cx, cy = fx + fw / 2, fy + fh / 2

    im = Image.new("L", (size, size), int(t["bg"]))
    d = ImageDraw.Draw(im)
    d.ellipse([fx, fy, fx + fw - 1, fy + fh - 1], fill=int(t["skin"]))

    shift = {None: 0.0, Gaze.FRONT: 0.0, Gaze.LEFT: -0.03, Gaze.RIGHT: 0.03}[gaze] * fw
    ex = fw * t["eye_gap"]
    ey = fy + fh * 0.40
    ea, eb = fw * 0.11, fh * 0.045 * eye_open
    lw = max(2, size // 60)
    for s in (-1, 1):
        x0 = cx + s * ex
        d.ellipse([x0 - ea, ey - eb, x0 + ea, ey + eb], fill=40)
        d.ellipse([x0 + shift - ea * 0.3, ey - eb * 0.5, x0 + shift + ea * 0.3, ey + eb * 0.5], fill=15)
        by = ey - fh * (0.10 + brow_lift)
        inner = (x0 - s * fw * 0.13, by + brow_tilt * fh * 0.035)
        outer = (x0 + s * fw * 0.13, by - brow_tilt * fh * 0.015)
        d.line([inner, outer], fill=55, width=lw + 1)
    d.ellipse([cx - fw * 0.06, fy + fh * 0.55, cx + fw * 0.06, fy + fh * 0.65], fill=int(t["skin"] * 0.8))

    my = fy + fh * 0.78
    pts = [(cx + u * fw * 0.22, my - mouth_curve * (1 - u * u) * fh * 0.06) for u in np.linspace(-1, 1, 25)]
    d.line(pts, fill=60, width=lw + 1)
    if mouth_open > 0:
        oh = fh * 0.06 * mouth_open
        d.ellipse([cx - fw * 0.10 * (0.5 + mouth_open / 2), my - oh / 2,
                   cx + fw * 0.10 * (0.5 + mouth_open / 2), my + oh / 2], fill=30)

    g = np.asarray(im, dtype=np.float64)
    g = g + rng.normal(0.0, 4.0, g.shape)
    g = gaussian_filter(g, size / 130.0)
    if color:
        rgb = np.clip(g[..., None] * t["tint"][None, None, :], 0, 255)
        img = np.floor(rgb + 0.5).astype(np.uint8)
    else:
        img = np.floor(np.clip(g, 0, 255) + 0.5).astype(np.uint8)
    return img, (fx, fy, fw, fh)


def two_face_scene(size=400, seed=0):
    """Canvas with a small and a large face; returns the image and both rectangles (small, large)."""
    rng = np.random.default_rng(seed)
    canvas = np.clip(rng.normal(90, 5, (size, size)), 0, 255)
    small, sbox = render_face(Emotion.NEUTRAL, 3, size=size // 4, seed=seed, color=False)
    large, lbox = render_face(Emotion.HAPPY, 5, size=size // 2, seed=seed + 1, color=False)
    ox, oy = 10, 10
    canvas[oy : oy + small.shape[0], ox : ox + small.shape[1]] = small
    lx, ly = size // 2 - 10, size // 2 - 10
    canvas[ly : ly + large.shape[0], lx : lx + large.shape[1]] = large
    img = np.floor(canvas + 0.5).astype(np.uint8)
    return img, (sbox[0] + ox, sbox[1] + oy, sbox[2], sbox[3]), (lbox[0] + lx, lbox[1] + ly, lbox[2], lbox[3])


def _write(path, img):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(img).save(path)


def make_cfee_like(root, subjects=230, size=200, seed=0):
    """One image per (subject, emotion) in ``<root>/<Emotion>/S<id>_<emotion>.png`` folders."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / MARKER).write_text("procedurally generated fixture\n")
    for sid in range(subjects):
        for emo in Emotion:
            img, _ = render_face(emo, sid, None, size=size, seed=seed * 1_000_003 + sid * 7 + emo)
            _write(root / emo.label / f"S{sid:03d}_{emo.name.lower()}.png", img)
    return root


def make_rafd_like(root, subjects=67, size=200, seed=0):
    """RaFD naming (``Rafd090_<id>_Synthetic_<gender>_<emotion>_<gaze>.png``), 3 gazes per expression."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / MARKER).write_text("procedurally generated fixture\n")
    gazes = {"frontal": Gaze.FRONT, "left": Gaze.LEFT, "right": Gaze.RIGHT}
    for sid in range(subjects):
        gender = "female" if sid % 2 else "male"
        for emo in Emotion:
            for gname, gaze in gazes.items():
                img, _ = render_face(emo, 500 + sid, gaze, size=size,
                                     seed=seed * 1_000_003 + sid * 31 + emo * 3 + len(gname))
                name = f"Rafd090_{sid + 1:02d}_Synthetic_{gender}_{emo.name.lower()}_{gname}.png"
                _write(root / name, img)
    return root


def synthetic_samples(kind, subjects=None):
    """In-memory sample lists with dataset-shaped counts (no files)."""
    out = []
    if kind == "cfee":
        for sid in range(subjects or 230):
            for emo in Emotion:
                out.append(ImageSample(f"/synthetic/cfee/{emo.label}/S{sid:03d}_{emo.name.lower()}.png",
                                       "cfee", f"S{sid:03d}", emo))
    elif kind == "rafd":
        for sid in range(subjects or 67):
            for emo in Emotion:
                for gaze in Gaze:
                    out.append(ImageSample(f"/synthetic/rafd/Rafd090_{sid + 1:02d}_{emo.name.lower()}_{gaze.value}.png",
                                           "rafd", f"{sid + 1:02d}", emo, gaze))
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    return sorted(out)


def is_synthetic(root):
    return root is not None and (Path(root) / MARKER).exists()
