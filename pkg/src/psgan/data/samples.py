"""Training/inference quadruples: content, style, masks and target."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from psgan.autodiff import Tensor
from psgan.data.annotations import DEFAULT_MIN_DIM, TextAnnotation, filter_polygons
from psgan.data.edges import edge_bits
from psgan.data.font import render_text
from psgan.data.raster import rasterize_mask
from psgan.errors import DegeneratePatch, SampleSkipped, ShapeError
from psgan.norm import MaskSet


@dataclass
class Sample:
    """One (content, style, masks, target) quadruple.

    ``style`` and ``target`` are the source image itself; ``content`` has
    every text region replaced by its edge map. ``transcripts[i]`` belongs
    to ``masks.masks[i]``.
    """

    content: np.ndarray
    style: np.ndarray
    masks: MaskSet
    target: np.ndarray
    transcripts: List[str] = field(default_factory=list)
    image_id: Optional[str] = None

    @property
    def shape(self):
        return self.target.shape[:2]


def mask_bbox(mask: np.ndarray):
    """(row0, row1, col0, col1), half-open, of the active pixels."""
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise DegeneratePatch("empty mask has no bounding box")
    return int(rows[0]), int(rows[-1]) + 1, int(cols[0]), int(cols[-1]) + 1


def text_masks(annotations: Sequence[TextAnnotation], dims):
    """Rasterise annotations into disjoint masks (lower index wins overlaps).

    Returns ``(MaskSet, kept_annotations)``; annotations left with fewer
    than two pixels are dropped.
    """
    taken = np.zeros(dims, dtype=bool)
    masks, kept = [], []
    for ann in annotations:
        try:
            m = rasterize_mask(ann.polygon, dims)
        except DegeneratePatch:
            continue
        m &= ~taken
        if m.sum() < 2:
            continue
        taken |= m
        masks.append(m)
        kept.append(ann)
    return MaskSet(masks, dims), kept


def build_sample(image: np.ndarray, annotations: Sequence[TextAnnotation], min_dim: float = DEFAULT_MIN_DIM,
                 image_id: Optional[str] = None) -> Sample:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ShapeError(f"expected an 8-bit RGB image, got {image.dtype} array of shape {image.shape}")
    dims = image.shape[:2]
    retained = [a for a in filter_polygons(annotations, min_dim, dims) if not a.ignorable]
    masks, kept = text_masks(retained, dims)
    if not kept:
        raise SampleSkipped(f"no usable text regions in image {image_id!r}")
    content = image.copy()
    for m in masks.masks:
        content[m] = np.where(edge_bits(image, m), 255, 0)[m][:, None].astype(np.uint8)
    return Sample(content, image, masks, image, [a.transcript for a in kept], image_id)


def replacement_content(image: np.ndarray, masks: MaskSet, texts: Sequence[str]) -> np.ndarray:
    """Content image for inference: each region shows the edges of its new text.

    The string is rendered in the bundled font, fitted to the mask's bounding
    box, then edge-mapped like training data.
    """
    if len(texts) != len(masks):
        raise ValueError(f"{len(texts)} replacement strings for {len(masks)} regions")
    content = np.array(image, dtype=np.uint8, copy=True)
    for m, text in zip(masks.masks, texts):
        r0, r1, c0, c1 = mask_bbox(m)
        canvas = np.zeros(m.shape, dtype=np.uint8)
        canvas[r0:r1, c0:c1] = render_text(text, r1 - r0, c1 - c0) * np.uint8(255)
        content[m] = np.where(edge_bits(canvas, m), 255, 0)[m][:, None].astype(np.uint8)
    return content


def to_tensor(images: Sequence[np.ndarray]) -> Tensor:
    """uint8 HxWx3 images -> float32 N x 3 x H x W tensor in [-1, 1]."""
    arr = np.stack([np.asarray(im) for im in images]).astype(np.float32)
    return Tensor(arr.transpose(0, 3, 1, 2) / 127.5 - 1.0)


def to_images(t) -> List[np.ndarray]:
    data = t.data if isinstance(t, Tensor) else np.asarray(t)
    arr = np.clip(np.rint((data + 1.0) * 127.5), 0, 255).astype(np.uint8)
    return [a.transpose(1, 2, 0).copy() for a in arr]
