"""Glyph readers for synthetic text regions.

Both readers binarise a region against a background model fitted to its
border, then try every string length whose layout fits the box, decode each
glyph cell by nearest prototype and keep the length with the smallest
pixel residual. They differ only in where prototypes come from: the font
itself (:class:`OracleRecognizer`) or labelled training crops
(:class:`PrototypeRecognizer`).
"""

from __future__ import annotations

from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from psgan.data.font import ALPHABET, GLYPH_H, GLYPH_W, GLYPHS, text_layout
from psgan.data.samples import mask_bbox

MIN_INK_CONTRAST = 30.0
MAX_CHARS = 16


class Recognizer(Protocol):
    def __call__(self, region: np.ndarray, mask: np.ndarray) -> str: ...


def crop_region(image: np.ndarray, mask: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    r0, r1, c0, c1 = mask_bbox(mask)
    return image[r0:r1, c0:c1], mask[r0:r1, c0:c1]


def ink_map(region: np.ndarray) -> np.ndarray:
    """Per-pixel foreground weight in [0, 1] for an RGB region crop.

    The background is a per-channel plane fitted to the 1-pixel border; the
    foreground colour is the mean of the pixels farthest from it.
    """
    img = np.asarray(region, dtype=np.float64)
    h, w = img.shape[:2]
    if h < 3 or w < 3:
        return np.zeros((h, w))
    yy, xx = np.mgrid[0:h, 0:w]
    ring = np.zeros((h, w), dtype=bool)
    ring[[0, -1], :] = True
    ring[:, [0, -1]] = True
    design = np.stack([np.ones(ring.sum()), xx[ring], yy[ring]], axis=1)
    coef, *_ = np.linalg.lstsq(design, img[ring], rcond=None)
    background = coef[0] + xx[..., None] * coef[1] + yy[..., None] * coef[2]
    diff = img - background
    dist = np.linalg.norm(diff, axis=-1)
    peak = dist.max()
    if peak < MIN_INK_CONTRAST:
        return np.zeros((h, w))
    direction = diff[dist > 0.5 * peak].mean(axis=0)
    norm2 = float(direction @ direction)
    return np.clip(diff @ direction / norm2, 0.0, 1.0)


def glyph_cells(ink: np.ndarray, n_chars: int) -> Optional[Tuple[np.ndarray, float, int]]:
    """Block-averaged 5x3 cell per character, the ink energy left outside all
    cells, and the layout scale, for ``n_chars`` laid out in this box."""
    h, w = ink.shape
    lay = text_layout(n_chars, h, w)
    if lay is None:
        return None
    k = lay.scale
    outside = np.ones((h, w), dtype=bool)
    cells = np.empty((n_chars, GLYPH_H, GLYPH_W))
    for j in range(n_chars):
        rows, cols = lay.cell(j)
        block = ink[rows, cols]
        outside[rows, cols] = False
        cells[j] = block.reshape(GLYPH_H, k, GLYPH_W, k).mean(axis=(1, 3))
    return cells, float((ink[outside] ** 2).sum()), k


def decode(ink: np.ndarray, labels: Sequence[str], protos: np.ndarray, max_chars: int = MAX_CHARS) -> str:
    """Best-scoring string over all feasible lengths (ties go to the shorter)."""
    if not labels or not ink.any():
        return ""
    flat = protos.reshape(len(labels), -1)
    best, best_score = "", np.inf
    for n in range(1, max_chars + 1):
        res = glyph_cells(ink, n)
        if res is None:
            break
        cells, leftover, k = res
        d = ((cells.reshape(n, 1, -1) - flat[None]) ** 2).sum(axis=-1)
        pick = d.argmin(axis=1)
        score = leftover + k * k * float(d[np.arange(n), pick].sum())
        if score < best_score - 1e-9:
            best_score = score
            best = "".join(labels[i] for i in pick)
    return best


class OracleRecognizer:
    """Reads text rendered in the bundled font using the font bitmaps as prototypes.

    Exact on clean renders of ``alphabet``; used to score generated images
    independently of any learned model.
    """

    def __init__(self, alphabet: str = ALPHABET):
        self.labels = list(alphabet)
        self.prototypes = np.stack([GLYPHS[c].astype(np.float64) for c in self.labels])

    def __call__(self, region: np.ndarray, mask: np.ndarray = None) -> str:
        if mask is not None:
            region, mask = crop_region(region, mask)
        return decode(ink_map(region), self.labels, self.prototypes)


class PrototypeRecognizer(BaseEstimator, ClassifierMixin):
    """Toy trainable reader: one mean glyph cell per character class.

    ``fit`` takes region crops with their transcripts; characters absent from
    the training data can never be predicted.
    """

    def __init__(self, max_chars: int = MAX_CHARS):
        self.max_chars = max_chars

    def fit(self, regions: Sequence[np.ndarray], transcripts: Sequence[str]):
        if len(regions) != len(transcripts):
            raise ValueError(f"{len(regions)} regions but {len(transcripts)} transcripts")
        sums: Dict[str, np.ndarray] = {}
        counts: Dict[str, int] = {}
        for region, text in zip(regions, transcripts):
            text = text.upper()
            res = glyph_cells(ink_map(region), len(text))
            if res is None:
                continue
            for ch, cell in zip(text, res[0]):
                sums[ch] = sums.get(ch, 0.0) + cell
                counts[ch] = counts.get(ch, 0) + 1
        self.classes_ = np.array(sorted(sums))
        self.prototypes_ = np.stack([sums[c] / counts[c] for c in self.classes_]) if sums else np.zeros((0, GLYPH_H, GLYPH_W))
        self.counts_ = {c: counts[c] for c in self.classes_}
        return self

    def predict(self, regions: Sequence[np.ndarray]) -> List[str]:
        check_is_fitted(self, "prototypes_")
        labels = list(self.classes_)
        return [decode(ink_map(r), labels, self.prototypes_, self.max_chars) for r in regions]

    def __call__(self, region: np.ndarray, mask: np.ndarray = None) -> str:
        if mask is not None:
            region, mask = crop_region(region, mask)
        return self.predict([region])[0]

    def score(self, regions, transcripts, sample_weight=None):
        preds = self.predict(regions)
        return float(np.mean([p.casefold() == t.casefold() for p, t in zip(preds, transcripts)]))
