"""Pixel-level helpers: decoding, luma conversion, bilinear resampling, PNG output."""
from pathlib import Path

import numpy as np
from PIL import Image

LUMA = (0.299, 0.587, 0.114)


def round_half_up(a):
    return np.floor(np.asarray(a, dtype=np.float64) + 0.5)


def to_uint8(a):
    return np.clip(round_half_up(a), 0, 255).astype(np.uint8)


def load_image(path):
    """Decode an image file to a uint8 array, (H, W) for gray or (H, W, 3) for color."""
    with Image.open(path) as im:
        if im.mode in ("L", "I;16", "I", "F", "1"):
            arr = np.asarray(im.convert("L"))
        else:
            arr = np.asarray(im.convert("RGB"))
    return np.ascontiguousarray(arr)


def save_gray_png(path, img):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img = np.asarray(img)
    if img.dtype != np.uint8 or img.ndim != 2:
        raise ValueError(f"expected a 2-D uint8 image, got {img.dtype} {img.shape}")
    Image.fromarray(img, mode="L").save(path, format="PNG")


def to_gray(image):
    """BT.601 luma of an RGB image, rounded half-up; gray input passes through."""
    image = np.asarray(image)
    if image.ndim == 2:
        return image.astype(np.uint8, copy=False)
    if image.ndim != 3 or image.shape[2] < 3:
        raise ValueError(f"unsupported image shape {image.shape}")
    rgb = image[..., :3].astype(np.float64)
    y = LUMA[0] * rgb[..., 0] + LUMA[1] * rgb[..., 1] + LUMA[2] * rgb[..., 2]
    # R=G=B=k must map back to k although the weights do not sum to 1.0 exactly in binary
    return to_uint8(np.round(y, 9))


def _interp_matrix(n_out, n_in):
    # half-pixel centres, edge-clamped; rows are convex weights
    m = np.zeros((n_out, n_in), dtype=np.float64)
    scale = n_in / n_out
    src = (np.arange(n_out) + 0.5) * scale - 0.5
    src = np.clip(src, 0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    rows = np.arange(n_out)
    np.add.at(m, (rows, lo), 1.0 - frac)
    np.add.at(m, (rows, hi), frac)
    return m


def resize_bilinear(img, height, width):
    """Bilinear resample of a 2-D float or integer grid; returns float64."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    if (h, w) == (height, width):
        return img.copy()
    return _interp_matrix(height, h) @ img @ _interp_matrix(width, w).T
