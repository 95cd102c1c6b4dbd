"""ICDAR-style ground-truth lines: ``x1,y1,...,xk,yk,script,transcript``."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

from psgan.errors import AnnotationError

IGNORE_MARK = "###"
DEFAULT_MIN_DIM = 200
REFERENCE_SIZE = 1000


@dataclass(frozen=True)
class TextAnnotation:
    polygon: Tuple[Tuple[float, float], ...]
    transcript: str
    script: Optional[str] = None

    @property
    def ignorable(self) -> bool:
        return self.transcript == IGNORE_MARK

    def bbox(self):
        xs = [p[0] for p in self.polygon]
        ys = [p[1] for p in self.polygon]
        return min(xs), min(ys), max(xs), max(ys)

    def largest_dimension(self) -> float:
        x0, y0, x1, y1 = self.bbox()
        return max(x1 - x0, y1 - y0)

    def to_line(self) -> str:
        coords = [_fmt(v) for p in self.polygon for v in p]
        buf = io.StringIO()
        csv.writer(buf, lineterminator="").writerow(coords + [self.script or "", self.transcript])
        return buf.getvalue()


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def parse_line(line: str, line_number: int = None) -> TextAnnotation:
    try:
        fields = next(csv.reader([line]))
    except (csv.Error, StopIteration) as exc:
        raise AnnotationError(f"unparseable line: {exc}", line_number) from None
    if len(fields) < 8:
        raise AnnotationError(f"expected >= 3 vertices plus script and transcript, got {len(fields)} fields",
                              line_number)
    *coords, script, transcript = fields
    if len(coords) % 2:
        raise AnnotationError(f"odd number of coordinates ({len(coords)})", line_number)
    try:
        values = [float(c) for c in coords]
    except ValueError:
        raise AnnotationError("non-numeric coordinate (unquoted comma in transcript?)", line_number) from None
    polygon = tuple(zip(values[0::2], values[1::2]))
    return TextAnnotation(polygon, transcript, script.strip() or None)


def parse_annotations(source: Union[str, Path, Iterable[str]]) -> List[TextAnnotation]:
    """Parse a UTF-8 annotation file (path) or an iterable of lines.

    Blank lines are skipped; malformed lines raise with their 1-based number.
    """
    if isinstance(source, (str, Path)):
        lines = Path(source).read_text(encoding="utf-8").splitlines()
    else:
        lines = list(source)
    out = []
    for i, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n").lstrip("\ufeff")
        if not line.strip():
            continue
        out.append(parse_line(line, i))
    return out


def write_annotations(annotations: Sequence[TextAnnotation], path) -> None:
    text = "".join(a.to_line() + "\n" for a in annotations)
    Path(path).write_text(text, encoding="utf-8")


def scaled_min_dim(image_size: int, min_dim: float = DEFAULT_MIN_DIM) -> float:
    """Size threshold rescaled from the ~1000 px source images to ``image_size``."""
    return min_dim * image_size / REFERENCE_SIZE


def filter_polygons(annotations: Sequence[TextAnnotation], min_dim: float = DEFAULT_MIN_DIM,
                    image_dims=None) -> List[TextAnnotation]:
    """Keep annotations whose bounding box spans at least ``min_dim`` pixels.

    The bounding box is measured after clamping to ``image_dims`` (h, w) when
    given.
    """
    kept = []
    for a in annotations:
        x0, y0, x1, y1 = a.bbox()
        if image_dims is not None:
            h, w = image_dims
            x0, x1 = min(max(x0, 0), w), min(max(x1, 0), w)
            y0, y1 = min(max(y0, 0), h), min(max(y1, 0), h)
        if max(x1 - x0, y1 - y0) >= min_dim:
            kept.append(a)
    return kept
