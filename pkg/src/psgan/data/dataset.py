"""On-disk dataset layout: ``images/NNNN.png`` + ``gt/NNNN.txt``.

A ``dataset.json`` next to them, written by the synthetic generator,
records the polygon size threshold to apply when loading.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from psgan.data.annotations import DEFAULT_MIN_DIM, TextAnnotation, parse_annotations, write_annotations
from psgan.data.samples import Sample, build_sample
from psgan.errors import SampleSkipped

log = logging.getLogger(__name__)

THREADS_ENV = "PSGAN_THREADS"


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def write_png(image: np.ndarray, path) -> None:
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(path, format="PNG")


def write_dataset(directory, items: Sequence[Tuple[np.ndarray, Sequence[TextAnnotation]]],
                  meta: Optional[dict] = None, start: int = 0) -> Path:
    directory = Path(directory)
    (directory / "images").mkdir(parents=True, exist_ok=True)
    (directory / "gt").mkdir(parents=True, exist_ok=True)
    for i, (image, anns) in enumerate(items, start=start):
        write_png(image, directory / "images" / f"{i:04d}.png")
        write_annotations(anns, directory / "gt" / f"{i:04d}.txt")
    if meta is not None:
        (directory / "dataset.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    return directory


def dataset_meta(directory) -> dict:
    p = Path(directory) / "dataset.json"
    return json.loads(p.read_text()) if p.is_file() else {}


def list_items(directory) -> List[str]:
    directory = Path(directory)
    if not (directory / "images").is_dir() or not (directory / "gt").is_dir():
        raise FileNotFoundError(f"{directory} is not a dataset directory (needs images/ and gt/)")
    ids = sorted(p.stem for p in (directory / "images").glob("*.png"))
    missing = [i for i in ids if not (directory / "gt" / f"{i}.txt").is_file()]
    if missing:
        raise FileNotFoundError(f"missing ground truth for images: {missing[:5]}")
    return ids


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def load_dataset(directory, min_dim: Optional[float] = None, threads: Optional[int] = None) -> List[Sample]:
    """Build Samples for every image; images without usable text are skipped."""
    directory = Path(directory)
    ids = list_items(directory)
    if min_dim is None:
        min_dim = dataset_meta(directory).get("min_dim", DEFAULT_MIN_DIM)

    def one(item_id):
        image = read_png(directory / "images" / f"{item_id}.png")
        anns = parse_annotations(directory / "gt" / f"{item_id}.txt")
        try:
            return build_sample(image, anns, min_dim, image_id=item_id)
        except SampleSkipped:
            log.info("skipping %s: no retained text regions", item_id)
            return None

    threads = threads or default_threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            samples = list(pool.map(one, ids))
    else:
        samples = [one(i) for i in ids]
    return [s for s in samples if s is not None]
