"""Sobel edge maps used to describe text regions in content images."""

from __future__ import annotations

import numpy as np

EDGE_THRESHOLD = 0.25

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)


def sobel_magnitude(image: np.ndarray) -> np.ndarray:
    """Gradient magnitude, L2 over channels, with edge-replicated borders.

    ``image`` is (h, w) or (h, w, c), any numeric dtype.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    p = np.pad(img, ((1, 1), (1, 1), (0, 0)), mode="edge")
    h, w = img.shape[:2]
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    for i in range(3):
        for j in range(3):
            win = p[i:i + h, j:j + w]
            gx += _SOBEL_X[i, j] * win
            gy += _SOBEL_X[j, i] * win
    return np.sqrt((gx * gx + gy * gy).sum(axis=-1))


def edge_bits(image: np.ndarray, mask: np.ndarray, threshold: float = EDGE_THRESHOLD) -> np.ndarray:
    """Binary edges inside ``mask`` after normalising the magnitude to [0, 1] over the region."""
    mask = np.asarray(mask, dtype=bool)
    mag = sobel_magnitude(image)
    peak = mag[mask].max(initial=0.0)
    out = np.zeros(mask.shape, dtype=bool)
    if peak <= 1e-12:
        return out
    out[mask] = mag[mask] / peak >= threshold
    return out


def edge_map(image: np.ndarray, mask: np.ndarray, threshold: float = EDGE_THRESHOLD) -> np.ndarray:
    """Copy of ``image`` with the masked region replaced by white-on-black edges.

    For uint8 images edges are 255, otherwise 1.0; pixels outside the mask
    are untouched.
    """
    image = np.asarray(image)
    mask = np.asarray(mask, dtype=bool)
    bits = edge_bits(image, mask, threshold)
    on = 255 if image.dtype == np.uint8 else 1
    out = image.copy()
    region = np.where(bits, on, 0).astype(image.dtype)
    if out.ndim == 3:
        out[mask] = region[mask][:, None]
    else:
        out[mask] = region[mask]
    return out
