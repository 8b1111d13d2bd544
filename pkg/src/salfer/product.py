"""Saliency-weighted face images: each pixel scaled by its saliency in [0, 1]."""
import numpy as np

from .imaging import round_half_up


def scaled_product(face, saliency, renormalize=False):
    """``round_half_up(face * saliency)`` as uint8.

    With ``renormalize`` the result is stretched so its brightest pixel is 255
    (off by default; an all-zero product stays zero).
    """
    face = np.asarray(face)
    saliency = np.asarray(saliency, dtype=np.float64)
    if face.shape != saliency.shape:
        raise ValueError(f"face shape {face.shape} does not match saliency shape {saliency.shape}")
    if saliency.size and (saliency.min() < 0.0 or saliency.max() > 1.0):
        raise ValueError("saliency values must lie in [0, 1]")
    prod = face.astype(np.float64) * saliency
    if renormalize:
        peak = prod.max() if prod.size else 0.0
        if peak > 0:
            prod = prod * 255.0 / peak
    return np.clip(round_half_up(prod), 0, 255).astype(np.uint8)
