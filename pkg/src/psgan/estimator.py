"""scikit-learn style wrapper around training and inference."""

from __future__ import annotations

from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from psgan.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from psgan.data.annotations import TextAnnotation
from psgan.data.samples import Sample, replacement_content, text_masks
from psgan.errors import ShapeError
from psgan.generator import GeneratorConfig
from psgan.norm import MaskSet
from psgan.training import TrainConfig, infer, load_generator, train

_GEN_PARAMS = ("base_channels", "n_resblocks", "n_downsamples", "dropout_rate")
_TRAIN_PARAMS = ("lambda_l1", "learning_rate", "adam_beta1", "adam_beta2", "batch_size", "steps", "seed")


def check_image(image, name: str = "image") -> np.ndarray:
    """Return ``image`` as a contiguous H x W x 3 uint8 array.

    Integer arrays must already lie in [0, 255]; a 2D array is treated as
    grayscale and replicated to three channels.
    """
    arr = np.asarray(image)
    if arr.ndim == 2:
        arr = np.repeat(arr[..., None], 3, axis=2)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"{name} must be H x W x 3, got shape {arr.shape}")
    if arr.dtype != np.uint8:
        if not np.issubdtype(arr.dtype, np.integer):
            raise TypeError(f"{name} must hold 8-bit integers, got {arr.dtype}")
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError(f"{name} values fall outside [0, 255]")
        arr = arr.astype(np.uint8)
    return np.ascontiguousarray(arr)


def check_masks(masks, shape) -> MaskSet:
    """Coerce a MaskSet, boolean masks or polygons (vertex lists or
    annotations) into a MaskSet for an image of ``shape`` (h, w)."""
    shape = tuple(shape[:2])
    if isinstance(masks, MaskSet):
        if tuple(masks.shape) != shape:
            raise ShapeError(f"masks are {masks.shape}, image is {shape}")
        return masks
    items = list(masks)
    if not items:
        return MaskSet.empty(*shape)
    if all(isinstance(m, np.ndarray) and m.ndim == 2 for m in items):
        return MaskSet([m.astype(bool) for m in items], shape)
    anns = [m if isinstance(m, TextAnnotation) else TextAnnotation(tuple(map(tuple, m)), "")
            for m in items]
    ms, kept = text_masks(anns, shape)
    if len(kept) != len(anns):
        raise ValueError(f"{len(anns) - len(kept)} polygon(s) cover fewer than two pixels")
    return ms


class TextReplacer(BaseEstimator, TransformerMixin):
    """Text replacement model.

    ``fit`` trains on a sequence of :class:`Sample`; ``transform`` reconstructs
    each sample's target from its own content; ``replace_text`` edits one image.
    """

    def __init__(self, base_channels: int = 32, n_resblocks: int = 6, n_downsamples: int = 2,
                 dropout_rate: float = 0.5, lambda_l1: float = 100.0, learning_rate: float = 2e-4,
                 adam_beta1: float = 0.5, adam_beta2: float = 0.999, batch_size: int = 1,
                 steps: int = 5000, seed: int = 0, checkpoint_dir: Optional[str] = None):
        self.base_channels = base_channels
        self.n_resblocks = n_resblocks
        self.n_downsamples = n_downsamples
        self.dropout_rate = dropout_rate
        self.lambda_l1 = lambda_l1
        self.learning_rate = learning_rate
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.batch_size = batch_size
        self.steps = steps
        self.seed = seed
        self.checkpoint_dir = checkpoint_dir

    def _configs(self, image_size: int):
        gen = GeneratorConfig(image_size=image_size, **{k: getattr(self, k) for k in _GEN_PARAMS})
        tc = TrainConfig(checkpoint_every=0 if self.checkpoint_dir is None else 1000,
                         **{k: getattr(self, k) for k in _TRAIN_PARAMS})
        return gen, tc

    def fit(self, X: Sequence[Sample], y=None):
        samples = list(X)
        if not samples:
            raise ValueError("fit needs at least one Sample")
        if not all(isinstance(s, Sample) for s in samples):
            raise TypeError("fit expects psgan Sample objects")
        gen_cfg, train_cfg = self._configs(int(samples[0].shape[0]))
        report = train(samples, gen_cfg, train_cfg, self.checkpoint_dir)
        self.checkpoint_ = report.trainer.checkpoint()
        self.generator_ = load_generator(self.checkpoint_)
        self.history_ = report.losses
        return self

    @classmethod
    def from_checkpoint(cls, checkpoint: Union[str, Path, Checkpoint]) -> "TextReplacer":
        ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)
        gen = load_generator(ckpt)
        tc = ckpt.meta["train_config"]
        self = cls(**{k: getattr(gen.config, k) for k in _GEN_PARAMS}, **{k: tc[k] for k in _TRAIN_PARAMS})
        self.checkpoint_, self.generator_, self.history_ = ckpt, gen, []
        return self

    def save(self, path) -> Path:
        check_is_fitted(self, "checkpoint_")
        return save_checkpoint(self.checkpoint_, path)

    def transform(self, X: Sequence[Sample]) -> List[np.ndarray]:
        check_is_fitted(self, "generator_")
        samples = list(X)
        return infer([s.content for s in samples], [s.style for s in samples], [s.masks for s in samples],
                     self.generator_)

    def predict(self, X: Sequence[Sample], texts: Sequence[Sequence[str]]) -> List[np.ndarray]:
        """Re-render every sample with ``texts[i]`` in its regions."""
        check_is_fitted(self, "generator_")
        samples = list(X)
        if len(texts) != len(samples):
            raise ValueError(f"{len(texts)} text lists for {len(samples)} samples")
        contents = [replacement_content(s.style, s.masks, t) for s, t in zip(samples, texts)]
        return infer(contents, [s.style for s in samples], [s.masks for s in samples], self.generator_)

    def replace_text(self, image, regions, texts: Union[str, Sequence[str]]) -> np.ndarray:
        """Replace the text in each region of ``image``.

        ``regions`` is anything :func:`check_masks` accepts; a single string
        is used for every region. Pixels outside the regions are returned as-is.
        """
        check_is_fitted(self, "generator_")
        image = check_image(image)
        masks = check_masks(regions, image.shape)
        if not len(masks):
            return image.copy()
        if isinstance(texts, str):
            texts = [texts] * len(masks)
        content = replacement_content(image, masks, texts)
        out = infer(content, image, masks, self.generator_)
        union = masks.union
        result = image.copy()
        result[union] = out[union]
        return result

    def score(self, X: Sequence[Sample], y=None) -> float:
        """Negative mean L1 between reconstructions and targets in [-1, 1] units."""
        samples = list(X)
        outs = self.transform(samples)
        return -float(np.mean([np.abs(o.astype(np.float64) - s.target).mean() / 127.5
                               for o, s in zip(outs, samples)]))
