"""Visual saliency maps: an in-repo spectral-residual backend and external adapters.

Every map is min-max normalized per image to [0, 1] and has the shape of the
face it belongs to.
"""
from __future__ import annotations

import json
import shlex
import subprocess
import tempfile
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter, uniform_filter

from .imaging import load_image, resize_bilinear, save_gray_png, to_gray, to_uint8

WORK_SIZE = 64
AVG_KERNEL = 3
BLUR_SIGMA = 2.5
MIN_SIDE = 16
SIDECAR = "saliency_backend.json"


class BackendError(Exception):
    pass


def normalize_map(raw):
    """(v - min) / (max - min); a constant grid maps to zeros."""
    raw = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise ValueError("saliency map contains NaN or Inf")
    lo = raw.min()
    hi = raw.max()
    if hi <= lo:
        return np.zeros_like(raw)
    out = (raw - lo) / (hi - lo)
    # pin the extremes so max == 1 and min == 0 hold exactly
    out[raw == hi] = 1.0
    out[raw == lo] = 0.0
    return out


def spectral_residual_saliency(image):
    """Spectral-residual saliency of a 2-D gray image.

    Computed at a fixed 64x64 working resolution: residual of the log-amplitude
    spectrum against its 3x3 local mean (periodic boundary), back-transformed with the original phase,
    squared, Gaussian-blurred (sigma 2.5 px), upsampled, then normalized.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        img = np.asarray(to_gray(image), dtype=np.float64)
    h, w = img.shape
    if h < MIN_SIDE or w < MIN_SIDE:
        raise ValueError(f"image must be at least {MIN_SIDE}x{MIN_SIDE}, got {w}x{h}")
    if img.max() == img.min():
        return np.zeros((h, w))
    small = resize_bilinear(img, WORK_SIZE, WORK_SIZE)
    spec = np.fft.fft2(small)
    # log1p: exact spectral zeros (common in synthetic images) would otherwise dominate the residual
    log_amp = np.log1p(np.abs(spec))
    phase = np.angle(spec)
    residual = log_amp - uniform_filter(log_amp, size=AVG_KERNEL, mode="wrap")
    sal = np.abs(np.fft.ifft2(np.exp(residual + 1j * phase))) ** 2
    sal = gaussian_filter(sal, BLUR_SIGMA, mode="constant")
    return normalize_map(resize_bilinear(sal, h, w))


def _coerce(raw, shape):
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim == 3:
        raw = raw.mean(axis=2)
    if raw.ndim != 2:
        raise BackendError(f"saliency map must be 2-D, got shape {raw.shape}")
    if raw.shape != tuple(shape):
        raw = resize_bilinear(raw, *shape)
    return normalize_map(raw)


class PrecomputedMaps:
    """Reads maps from a directory keyed by the source image's file stem (.npy or any image)."""

    concurrency = None

    def __init__(self, maps_dir):
        if maps_dir is None:
            raise BackendError("precomputed backend needs a maps directory")
        self.maps_dir = Path(maps_dir)
        if not self.maps_dir.is_dir():
            raise BackendError(f"precomputed maps directory not found: {self.maps_dir}")

    def raw_map(self, image, name):
        stem = Path(name).stem
        for cand in sorted(self.maps_dir.glob(f"{stem}.*")):
            if cand.suffix == ".npy":
                return np.load(cand)
            if cand.suffix.lower() in (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"):
                return load_image(cand)
        raise BackendError(f"precomputed saliency map missing for {name} in {self.maps_dir}")


class CommandBackend:
    """Runs an external program as ``<command> <input.png> <output.npy|.png>`` per image.

    Serialized by default since deep-model backends usually hold one GPU.
    """

    concurrency = 1

    def __init__(self, command):
        if not command:
            raise BackendError("command backend needs a command line")
        self.argv = shlex.split(command)

    def raw_map(self, image, name):
        with tempfile.TemporaryDirectory() as tmp:
            src = Path(tmp) / "input.png"
            dst = Path(tmp) / "saliency.npy"
            save_gray_png(src, to_uint8(image))
            try:
                subprocess.run(self.argv + [str(src), str(dst)], check=True, capture_output=True)
            except (OSError, subprocess.CalledProcessError) as exc:
                raise BackendError(f"saliency command {self.argv[0]!r} failed on {name}: {exc}") from None
            if dst.exists():
                return np.load(dst)
            png = dst.with_suffix(".png")
            if png.exists():
                return load_image(png)
            raise BackendError(f"saliency command wrote no map for {name}")


EXTERNAL_BACKENDS = {"precomputed": PrecomputedMaps, "command": CommandBackend}


def make_external(backend_id, **config):
    try:
        cls = EXTERNAL_BACKENDS[backend_id]
    except KeyError:
        raise BackendError(
            f"saliency backend {backend_id!r} is not registered; known: {', '.join(sorted(EXTERNAL_BACKENDS))}") from None
    if cls is PrecomputedMaps:
        return cls(config.get("maps_dir"))
    return cls(config.get("command"))


def external_saliency(image, backend, name=""):
    """Fetch a raw map from an external backend instance, coerce to the face's shape, normalize."""
    image = np.asarray(image)
    return _coerce(backend.raw_map(image, name), image.shape[:2])


def compute_saliency(image, backend="spectral", name="", external=None):
    if backend == "spectral":
        return spectral_residual_saliency(image)
    if external is None:
        raise BackendError(f"no adapter instance supplied for backend {backend!r}")
    return external_saliency(image, external, name)


def map_to_png_values(smap):
    return to_uint8(255.0 * np.asarray(smap))


def png_values_to_map(arr):
    return np.asarray(arr, dtype=np.float64) / 255.0


def write_sidecar(out_dir, backend, **extra):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {"backend": backend, "work_size": WORK_SIZE, "avg_kernel": AVG_KERNEL, "blur_sigma": BLUR_SIGMA}
    meta.update({k: str(v) for k, v in extra.items() if v is not None})
    (out_dir / SIDECAR).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
