"""Batch stages over manifests: face crops, saliency maps, saliency products.

Each stage writes ``<stage dir>/<dataset>/<Emotion>/<stem>.png`` so stages can be
re-run independently. ``jobs > 1`` fans images out to worker processes; results
come back in input order and files are written by the workers themselves.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .face import preprocess_file
from .imaging import load_image, save_gray_png
from .product import scaled_product
from .saliency import (compute_saliency, make_external, map_to_png_values, png_values_to_map,
                       write_sidecar)

log = logging.getLogger(__name__)

STAGE_DIRS = {"faces": "faces", "saliency": "saliency", "products": "products"}


@dataclass
class StageReport:
    written: int = 0
    skipped: list = field(default_factory=list)

    def summary(self, stage):
        return f"{stage}: {self.written} written, {len(self.skipped)} skipped"


def _map(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _face_task(args):
    src, dst, on_no_face, cascade_path = args
    face = preprocess_file(src, on_no_face=on_no_face, cascade_path=cascade_path)
    if face is None:
        return False
    save_gray_png(dst, face)
    return True


def preprocess_samples(samples, out_dir, on_no_face="skip", jobs=1, cascade_path=None):
    """Detect, crop and normalize every sample's face into ``out_dir``."""
    if on_no_face not in ("skip", "full-frame"):
        raise ValueError(f"on_no_face must be 'skip' or 'full-frame', got {on_no_face!r}")
    out_dir = Path(out_dir)
    tasks = [(s.image_path, str(out_dir / s.output_key()), on_no_face,
              None if cascade_path is None else str(cascade_path)) for s in samples]
    report = StageReport()
    for s, ok in zip(samples, _map(_face_task, tasks, jobs)):
        if ok:
            report.written += 1
        else:
            report.skipped.append(s.image_path)
    if report.skipped:
        log.warning("no face found in %d of %d images", len(report.skipped), len(samples))
    return report


def _saliency_task(args):
    src, dst, backend, ext_cfg = args
    if not Path(src).is_file():
        return False
    external = None
    if backend != "spectral":
        external = make_external(backend, **ext_cfg)
    smap = compute_saliency(load_image(src), backend, name=Path(src).stem, external=external)
    save_gray_png(dst, map_to_png_values(smap))
    return True


def saliency_samples(samples, faces_dir, out_dir, backend="spectral", jobs=1, **external_config):
    """Saliency map per available face crop. ``backend`` is ``spectral`` or a registered external id."""
    faces_dir, out_dir = Path(faces_dir), Path(out_dir)
    if backend != "spectral":
        make_external(backend, **external_config)  # fail early on a bad backend id or config
        jobs = 1  # external backends are serialized
    tasks = [(str(faces_dir / s.output_key()), str(out_dir / s.output_key()), backend, external_config)
             for s in samples]
    report = StageReport()
    for s, ok in zip(samples, _map(_saliency_task, tasks, jobs)):
        if ok:
            report.written += 1
        else:
            report.skipped.append(s.output_key())
    write_sidecar(out_dir, backend, **external_config)
    return report


def _product_task(args):
    face_path, sal_path, dst, renormalize = args
    if not Path(sal_path).is_file():
        return False
    face = load_image(face_path)
    smap = png_values_to_map(load_image(sal_path))
    save_gray_png(dst, scaled_product(face, smap, renormalize=renormalize))
    return True


def product_dirs(faces_dir, saliency_dir, out_dir, renormalize=False, jobs=1):
    """Saliency product for every face PNG under ``faces_dir`` that has a map at the same relative path."""
    faces_dir, saliency_dir, out_dir = Path(faces_dir), Path(saliency_dir), Path(out_dir)
    if not faces_dir.is_dir():
        raise FileNotFoundError(f"faces directory not found: {faces_dir}")
    rel = sorted(p.relative_to(faces_dir) for p in faces_dir.rglob("*.png"))
    tasks = [(str(faces_dir / r), str(saliency_dir / r), str(out_dir / r), renormalize) for r in rel]
    report = StageReport()
    for r, ok in zip(rel, _map(_product_task, tasks, jobs)):
        if ok:
            report.written += 1
        else:
            report.skipped.append(str(r))
    if report.skipped:
        log.warning("%d faces have no saliency map and were left out", len(report.skipped))
    return report
