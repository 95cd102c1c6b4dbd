"""Even-odd scanline polygon fill at pixel centres."""

from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np

from psgan.errors import DegeneratePatch


def polygon_area(polygon: Sequence[Tuple[float, float]]) -> float:
    pts = np.asarray(polygon, dtype=np.float64)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


def is_degenerate(polygon: Sequence[Tuple[float, float]]) -> bool:
    """True for fewer than three vertices or all vertices collinear."""
    if len(polygon) < 3:
        return True
    pts = np.asarray(polygon, dtype=np.float64)
    return int(np.linalg.matrix_rank(pts[1:] - pts[0])) < 2


def rasterize_mask(polygon: Sequence[Tuple[float, float]], image_dims) -> np.ndarray:
    """Boolean (h, w) mask; pixel (r, c) is on iff (c + .5, r + .5) is inside.

    Self-intersecting polygons are filled with the even-odd rule. Vertices
    outside the image are fine; the result is implicitly clamped.
    """
    h, w = image_dims
    if is_degenerate(polygon):
        raise DegeneratePatch(f"polygon with zero area: {list(polygon)}")
    pts = np.asarray(polygon, dtype=np.float64)
    x0s, y0s = pts[:, 0], pts[:, 1]
    x1s, y1s = np.roll(x0s, -1), np.roll(y0s, -1)
    mask = np.zeros((h, w), dtype=bool)
    centers = np.arange(w) + 0.5
    for r in range(h):
        y = r + 0.5
        # half-open rule so shared vertices are counted once
        crossing = (y0s <= y) != (y1s <= y)
        if not crossing.any():
            continue
        xa, ya, xb, yb = x0s[crossing], y0s[crossing], x1s[crossing], y1s[crossing]
        xs = np.sort(xa + (y - ya) * (xb - xa) / (yb - ya))
        for left, right in zip(xs[0::2], xs[1::2]):
            mask[r] |= (centers >= left) & (centers < right)
    return mask
