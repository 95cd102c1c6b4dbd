"""Bundled 3x5 bitmap font and the text layout shared by renderer and readers.

Every glyph's ink touches all four sides of its 3x5 cell, so a string's ink
bounding box is fixed by its layout. Letters in :data:`ALPHABET` differ
pairwise in at least two cells; M, O, Q and W cannot meet that at 3x5 and are
kept for rendering user text only.
"""

from __future__ import annotations

from typing import Dict, NamedTuple

import numpy as np

GLYPH_H, GLYPH_W = 5, 3
PITCH = GLYPH_W + 1  # glyph plus one empty column, in font cells
DEFAULT_SCALE = 3
DEFAULT_PAD = 2

_GLYPH_ROWS = {
    "A": (".#.", "#.#", "###", "#.#", "#.#"),
    "B": ("##.", "#.#", "##.", "#.#", "##."),
    "C": ("###", "#..", "#..", "#..", "###"),
    "D": ("##.", "#.#", "#.#", "#.#", "##."),
    "E": ("###", "#..", "###", "#..", "###"),
    "F": ("###", "#..", "###", "#..", "#.."),
    "G": ("###", "#..", "#.#", "#.#", "###"),
    "H": ("#.#", "#.#", "###", "#.#", "#.#"),
    "I": ("###", ".#.", ".#.", ".#.", "###"),
    "J": ("..#", "..#", "..#", "#.#", "###"),
    "K": ("#.#", "##.", "#..", "##.", "#.#"),
    "L": ("#..", "#..", "#..", "#..", "###"),
    "N": ("###", "#.#", "#.#", "#.#", "#.#"),
    "P": ("##.", "#.#", "##.", "#..", "#.."),
    "R": ("##.", "#.#", "##.", "#.#", "#.#"),
    "S": ("###", "#..", "###", "..#", "###"),
    "T": ("###", ".#.", ".#.", ".#.", ".#."),
    "U": ("#.#", "#.#", "#.#", "#.#", "###"),
    "V": ("#.#", "#.#", "#.#", "#.#", ".#."),
    "X": ("#.#", "#.#", ".#.", "#.#", "#.#"),
    "Y": ("#.#", "#.#", ".#.", ".#.", ".#."),
    "Z": ("###", "..#", ".#.", "#..", "###"),
}
_EXTRA_ROWS = {
    "M": ("#.#", "###", "###", "#.#", "#.#"),
    "O": ("###", "#.#", "#.#", "#.#", "###"),
    "Q": ("###", "#.#", "#.#", "###", "..#"),
    "W": ("#.#", "#.#", "###", "###", "#.#"),
}

ALPHABET = "".join(_GLYPH_ROWS)
GLYPHS: Dict[str, np.ndarray] = {
    ch: np.array([[c == "#" for c in row] for row in rows], dtype=bool)
    for ch, rows in sorted({**_GLYPH_ROWS, **_EXTRA_ROWS}.items())
}


class Layout(NamedTuple):
    """Placement of an n-character string inside a box: offset and pixel scale."""

    x0: int
    y0: int
    scale: int
    n_chars: int

    @property
    def width(self) -> int:
        return self.scale * (PITCH * self.n_chars - 1)

    @property
    def height(self) -> int:
        return self.scale * GLYPH_H

    def cell(self, j: int):
        """(row slice, col slice) of glyph ``j`` relative to the box."""
        x = self.x0 + self.scale * PITCH * j
        return slice(self.y0, self.y0 + self.height), slice(x, x + self.scale * GLYPH_W)


def text_layout(n_chars: int, box_h: int, box_w: int, max_scale: int = DEFAULT_SCALE,
                pad: int = DEFAULT_PAD):
    """Largest scale (capped at ``max_scale``) that fits ``n_chars`` with ``pad``
    pixels of margin, centred in the box. Returns None if nothing fits."""
    if n_chars < 1:
        return None
    k = min(max_scale, (box_w - 2 * pad) // (PITCH * n_chars - 1), (box_h - 2 * pad) // GLYPH_H)
    if k < 1:
        return None
    w, h = k * (PITCH * n_chars - 1), k * GLYPH_H
    return Layout((box_w - w) // 2, (box_h - h) // 2, int(k), n_chars)


def box_size(n_chars: int, scale: int = DEFAULT_SCALE, pad: int = DEFAULT_PAD):
    """(height, width) of the tightest box holding ``n_chars`` at ``scale``."""
    return scale * GLYPH_H + 2 * pad, scale * (PITCH * n_chars - 1) + 2 * pad


def render_text(text: str, box_h: int, box_w: int, max_scale: int = DEFAULT_SCALE,
                pad: int = DEFAULT_PAD) -> np.ndarray:
    """Boolean ink bitmap of ``text`` fitted into a ``box_h`` x ``box_w`` box."""
    text = text.upper()
    unknown = sorted(set(text) - set(GLYPHS))
    if unknown:
        raise ValueError(f"characters not in the bundled font: {''.join(unknown)!r}")
    lay = text_layout(len(text), box_h, box_w, max_scale, pad)
    if lay is None:
        raise ValueError(f"cannot fit {len(text)} characters into a {box_h}x{box_w} box")
    out = np.zeros((box_h, box_w), dtype=bool)
    block = np.ones((lay.scale, lay.scale), dtype=bool)
    for j, ch in enumerate(text):
        rows, cols = lay.cell(j)
        out[rows, cols] = np.kron(GLYPHS[ch], block)
    return out
