"""Recognition-based metrics for replaced text, and the augmentation proxy."""

from __future__ import annotations

import json
import logging
from collections import OrderedDict
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np

from psgan.data.samples import Sample, replacement_content
from psgan.data.synth import random_strings
from psgan.recognition import PrototypeRecognizer, Recognizer, crop_region
from psgan.training import infer, load_generator

log = logging.getLogger(__name__)

DETAIL_HEADER = "image_id,region_idx,truth,pred,acc,cer"


def word_accuracy(pred: str, truth: str) -> int:
    """1 for a case-insensitive exact match, else 0."""
    return int(pred.casefold() == truth.casefold())


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Levenshtein distance with unit costs; works on strings or token lists."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i]
        for j, y in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def char_error_rate(pred: str, truth: str) -> float:
    if not truth:
        raise ValueError("character error rate needs a non-empty reference")
    return edit_distance(pred, truth) / len(truth)


def word_error_rate(pred: str, truth: str) -> float:
    """Word-level edit distance over whitespace tokens, per reference word."""
    ref = truth.split()
    if not ref:
        raise ValueError("word error rate needs a non-empty reference")
    return edit_distance(pred.split(), ref) / len(ref)


@dataclass(frozen=True)
class RegionResult:
    image_id: str
    region_idx: int
    truth: str
    pred: str

    @property
    def acc(self) -> int:
        return word_accuracy(self.pred, self.truth)

    @property
    def cer(self) -> float:
        return char_error_rate(self.pred.casefold(), self.truth.casefold())

    @property
    def wer(self) -> float:
        return word_error_rate(self.pred.casefold(), self.truth.casefold())

    def to_line(self) -> str:
        return f"{self.image_id},{self.region_idx},{self.truth},{self.pred},{self.acc},{self.cer:.6g}"


@dataclass(frozen=True)
class MetricsReport:
    """Dataset-level (flat mean over regions) and per-image (mean of image
    means) versions of each metric."""

    accuracy: float
    per_image_accuracy: float
    wer: float
    per_image_wer: float
    cer: float
    per_image_cer: float
    n_regions: int
    n_images: int

    def table(self) -> str:
        rows = [("metric", "all regions", "per image")]
        for name, key in (("accuracy", "accuracy"), ("WER (word)", "wer"), ("CER (char)", "cer")):
            rows.append((name, f"{getattr(self, key):.4f}", f"{getattr(self, 'per_image_' + key):.4f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(3)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
        lines.append(f"{self.n_regions} regions in {self.n_images} images")
        return "\n".join(lines)

    def records(self) -> List[str]:
        return [json.dumps({"metric": f.name, "value": getattr(self, f.name)}) for f in fields(self)]

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text("".join(r + "\n" for r in self.records()))
        return path

    @classmethod
    def read(cls, path) -> "MetricsReport":
        values = {}
        for line in Path(path).read_text().splitlines():
            if line.strip():
                rec = json.loads(line)
                values[rec["metric"]] = rec["value"]
        return cls(**values)


def aggregate(results: Union[Mapping[str, Sequence[RegionResult]], Iterable[RegionResult]]) -> MetricsReport:
    if isinstance(results, Mapping):
        groups = {k: list(v) for k, v in results.items()}
    else:
        groups = OrderedDict()
        for r in results:
            groups.setdefault(r.image_id, []).append(r)
    if not groups:
        raise ValueError("no results to aggregate")
    empty = [k for k, v in groups.items() if not v]
    if empty:
        raise ValueError(f"images without regions: {empty[:5]}")
    flat = [r for v in groups.values() for r in v]
    out = {}
    for key in ("acc", "wer", "cer"):
        name = "accuracy" if key == "acc" else key
        out[name] = float(np.mean([getattr(r, key) for r in flat]))
        out["per_image_" + name] = float(np.mean([np.mean([getattr(r, key) for r in v]) for v in groups.values()]))
    return MetricsReport(n_regions=len(flat), n_images=len(groups), **out)


def write_details(results: Iterable[RegionResult], path) -> Path:
    path = Path(path)
    path.write_text(DETAIL_HEADER + "\n" + "".join(r.to_line() + "\n" for r in results))
    return path


def _recognize(recognizer: Recognizer, image, mask, where: str) -> str:
    try:
        return str(recognizer(image, mask))
    except Exception as exc:
        log.warning("recognizer failed on %s (%s: %s); scoring as empty", where, type(exc).__name__, exc)
        return ""


def replacement_texts(dataset: Sequence[Sample], seed: int = 0) -> List[List[str]]:
    """Random replacement strings, one per region, each as long as the original."""
    rng = np.random.default_rng([seed, 7])
    return [random_strings(rng, [len(t) for t in s.transcripts]) for s in dataset]


def evaluate(dataset: Sequence[Sample], generator_checkpoint, recognizer: Recognizer, seed: int = 0,
             on_targets: bool = False, detail_path=None, texts: Optional[Sequence[Sequence[str]]] = None,
             return_results: bool = False):
    """Replace every region's text, read it back and score against the request.

    With ``on_targets`` the untouched images are read against their own
    transcripts instead, which checks the recognizer rather than the model.
    """
    results: List[RegionResult] = []
    if on_targets:
        images = [s.target for s in dataset]
        truths = [s.transcripts for s in dataset]
    else:
        truths = list(texts) if texts is not None else replacement_texts(dataset, seed)
        gen = load_generator(generator_checkpoint)
        contents = [replacement_content(s.style, s.masks, t) for s, t in zip(dataset, truths)]
        images = infer(contents, [s.style for s in dataset], [s.masks for s in dataset], gen)
    for k, (s, img, tr) in enumerate(zip(dataset, images, truths)):
        image_id = s.image_id if s.image_id is not None else str(k)
        for j, (m, t) in enumerate(zip(s.masks.masks, tr)):
            pred = _recognize(recognizer, img, m, f"{image_id}#{j}")
            results.append(RegionResult(image_id, j, t, pred))
    if detail_path is not None:
        write_details(results, detail_path)
    report = aggregate(results)
    return (report, results) if return_results else report


def region_crops(dataset: Sequence[Sample], images: Sequence[np.ndarray] = None,
                 texts: Sequence[Sequence[str]] = None):
    """Flattened (crop, transcript) lists over all regions."""
    crops, labels = [], []
    for k, s in enumerate(dataset):
        img = s.target if images is None else images[k]
        tr = s.transcripts if texts is None else texts[k]
        for m, t in zip(s.masks.masks, tr):
            crops.append(crop_region(img, m)[0])
            labels.append(t)
    return crops, labels


@dataclass(frozen=True)
class ProxyResult:
    error_before: float
    error_after: float
    accuracy_before: float
    accuracy_after: float
    n_base_images: int
    n_synthetic_images: int

    def to_dict(self):
        return asdict(self)


def _fit_prototypes(regions, transcripts):
    return PrototypeRecognizer().fit(regions, transcripts)


def training_proxy(base_dataset: Sequence[Sample], heldout: Sequence[Sample], generator_checkpoint,
                   synthetic_fraction: float = 0.25, seed: int = 0,
                   recognizer_trainer: Callable = _fit_prototypes) -> ProxyResult:
    """Held-out error of a recognizer trained without and with generated images.

    ``round(fraction * len(base))`` base images are re-rendered by the generator
    with random same-length strings and added, labelled with those strings.
    Errors are mean character error rates over held-out regions.
    """
    if not 0.0 <= synthetic_fraction <= 1.0:
        raise ValueError(f"synthetic_fraction must lie in [0, 1], got {synthetic_fraction}")
    base = list(base_dataset)
    n_syn = int(round(synthetic_fraction * len(base)))
    crops, labels = region_crops(base)
    before = recognizer_trainer(crops, labels)

    if n_syn:
        rng = np.random.default_rng([seed, 11])
        picks = [base[i] for i in rng.choice(len(base), n_syn, replace=n_syn > len(base))]
        texts = [random_strings(rng, [len(t) for t in s.transcripts]) for s in picks]
        gen = load_generator(generator_checkpoint)
        contents = [replacement_content(s.style, s.masks, t) for s, t in zip(picks, texts)]
        fakes = infer(contents, [s.style for s in picks], [s.masks for s in picks], gen)
        syn_crops, syn_labels = region_crops(picks, fakes, texts)
        after = recognizer_trainer(crops + syn_crops, labels + syn_labels)
    else:
        after = recognizer_trainer(crops, labels)

    def score(rec):
        res = [RegionResult(str(k), 0, t, _recognize(rec, c, None, f"heldout#{k}"))
               for k, (c, t) in enumerate(zip(*region_crops(heldout)))]
        return float(np.mean([r.cer for r in res])), float(np.mean([r.acc for r in res]))

    (err_b, acc_b), (err_a, acc_a) = score(before), score(after)
    return ProxyResult(err_b, err_a, acc_b, acc_a, len(base), n_syn)
