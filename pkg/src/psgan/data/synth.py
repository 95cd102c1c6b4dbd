"""Deterministic synthetic text images for desk-scale experiments."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from psgan.data.annotations import TextAnnotation, scaled_min_dim
from psgan.data.font import ALPHABET, DEFAULT_PAD, DEFAULT_SCALE, box_size, render_text
from psgan.data.samples import Sample, build_sample
from psgan.errors import PlacementError

BACKGROUND_PALETTE = (
    (235, 235, 225), (200, 210, 225), (40, 45, 60), (25, 70, 50), (120, 40, 40),
    (230, 200, 120), (90, 90, 95), (170, 220, 200), (60, 30, 80), (250, 180, 170),
)
TEXT_PALETTE = (
    (10, 10, 10), (250, 250, 250), (200, 30, 30), (20, 60, 190), (240, 210, 40),
    (30, 150, 60), (250, 120, 0), (120, 230, 250),
)
MIN_CONTRAST = 140.0
MAX_ATTEMPTS = 100


@dataclass(frozen=True)
class SynthSpec:
    image_size: int = 64
    alphabet: str = ALPHABET
    scale: int = DEFAULT_SCALE
    pad: int = DEFAULT_PAD
    background_palette: Tuple[Tuple[int, int, int], ...] = BACKGROUND_PALETTE
    text_palette: Tuple[Tuple[int, int, int], ...] = TEXT_PALETTE
    min_polys: int = 1
    max_polys: int = 2
    min_chars: int = 2
    max_chars: int = 5
    margin: int = 4  # empty pixels kept between boxes, so masks stay apart when downsampled
    gradient_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.min_polys <= self.max_polys:
            raise ValueError("need 1 <= min_polys <= max_polys")
        if not 1 <= self.min_chars <= self.max_chars:
            raise ValueError("need 1 <= min_chars <= max_chars")
        h, w = box_size(self.max_chars, self.scale, self.pad)
        if h > self.image_size or w > self.image_size:
            raise ValueError(f"{self.max_chars} characters at scale {self.scale} do not fit {self.image_size} px")

    @property
    def min_dim(self) -> float:
        return scaled_min_dim(self.image_size)


class SyntheticImage(NamedTuple):
    image: np.ndarray
    annotations: List[TextAnnotation]


def _background(rng, spec: SynthSpec):
    size = spec.image_size
    base = np.array(spec.background_palette[rng.integers(len(spec.background_palette))], dtype=np.float64)
    if rng.random() < spec.gradient_prob:
        other = np.clip(base + rng.uniform(-40, 40, 3), 0, 255)
        angle = rng.uniform(0, 2 * np.pi)
        yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
        t = np.cos(angle) * xx + np.sin(angle) * yy
        t = (t - t.min()) / max(t.max() - t.min(), 1e-9)
        img = base + t[..., None] * (other - base)
        ends = (base, other)
    else:
        img = np.broadcast_to(base, (size, size, 3)).copy()
        ends = (base,)
    return img, ends


def _text_color(rng, spec: SynthSpec, ends):
    ok = [c for c in spec.text_palette
          if all(np.linalg.norm(np.subtract(c, e)) >= MIN_CONTRAST for e in ends)]
    if not ok:
        ok = [max(spec.text_palette, key=lambda c: min(np.linalg.norm(np.subtract(c, e)) for e in ends))]
    return np.array(ok[rng.integers(len(ok))], dtype=np.float64)


def _disjoint(a, b, m):
    ay, ax, ah, aw, _ = a
    by, bx, bh, bw, _ = b
    return ay + ah + m <= by or by + bh + m <= ay or ax + aw + m <= bx or bx + bw + m <= ax


def _place(rng, spec: SynthSpec, n_polys: int):
    """Rejection-sample a whole layout of ``n_polys`` separated boxes."""
    size = spec.image_size
    for _ in range(MAX_ATTEMPTS):
        boxes = []
        for _ in range(n_polys):
            n_chars = int(rng.integers(spec.min_chars, spec.max_chars + 1))
            h, w = box_size(n_chars, spec.scale, spec.pad)
            y = int(rng.integers(0, size - h + 1))
            x = int(rng.integers(0, size - w + 1))
            boxes.append((y, x, h, w, n_chars))
        if all(_disjoint(a, b, spec.margin) for i, a in enumerate(boxes) for b in boxes[:i]):
            return boxes
    raise PlacementError(f"could not place {n_polys} text boxes after {MAX_ATTEMPTS} attempts")


def synthesize_one(spec: SynthSpec, index: int) -> SyntheticImage:
    """Image ``index`` of the dataset defined by ``spec`` (independent of n)."""
    rng = np.random.default_rng([spec.seed, index])
    img, ends = _background(rng, spec)
    n_polys = int(rng.integers(spec.min_polys, spec.max_polys + 1))
    boxes = _place(rng, spec, n_polys)
    annotations = []
    for y, x, h, w, n_chars in boxes:
        text = "".join(spec.alphabet[i] for i in rng.integers(len(spec.alphabet), size=n_chars))
        color = _text_color(rng, spec, ends)
        ink = render_text(text, h, w, max_scale=spec.scale, pad=spec.pad)
        region = img[y:y + h, x:x + w]
        region[ink] = color
        poly = ((x, y), (x + w, y), (x + w, y + h), (x, y + h))
        annotations.append(TextAnnotation(poly, text, "Latin"))
    image = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return SyntheticImage(image, annotations)


def generate_synthetic(spec: SynthSpec, n: int, start: int = 0) -> List[SyntheticImage]:
    return [synthesize_one(spec, i) for i in range(start, start + n)]


def synthetic_samples(spec: SynthSpec, n: int, start: int = 0) -> List[Sample]:
    out = []
    for i in range(start, start + n):
        img, anns = synthesize_one(spec, i)
        out.append(build_sample(img, anns, spec.min_dim, image_id=f"{i:04d}"))
    return out


def random_strings(rng: np.random.Generator, lengths: Sequence[int], alphabet: str = ALPHABET) -> List[str]:
    return ["".join(alphabet[i] for i in rng.integers(len(alphabet), size=n)) for n in lengths]
