"""Normalization layers: batch/instance norm, conditional IN, AdaIN and PatchedAdaIN."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Union

import numpy as np

from psgan.autodiff import EPS, NormStats, Tensor, add, div, moments, mul, reshape, sub
from psgan.autodiff.ops import masked_moments, masked_moments_unchecked
from psgan.errors import DegeneratePatch, OverlappingMasks, ShapeError

__all__ = [
    "AffineParams", "BatchNormState", "MaskSet", "NormStats", "StyleBank", "adain", "batch_norm",
    "conditional_instance_norm", "downsample_mask", "instance_norm", "masked_moments",
    "patched_adain",
]


@dataclass
class AffineParams:
    """Learned per-channel scale and shift (gamma starts at 1, beta at 0)."""

    gamma: Tensor
    beta: Tensor

    @classmethod
    def create(cls, channels: int, dtype=np.float32) -> "AffineParams":
        return cls(Tensor(np.ones(channels), requires_grad=True, dtype=dtype),
                   Tensor(np.zeros(channels), requires_grad=True, dtype=dtype))

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]

    def apply(self, z: Tensor) -> Tensor:
        if z.shape[1] != self.channels:
            raise ShapeError(f"affine params for {self.channels} channels applied to shape {z.shape}")
        c = self.channels
        return add(mul(z, _reshape_channels(self.gamma, c)), _reshape_channels(self.beta, c))


def _reshape_channels(t: Tensor, c: int) -> Tensor:
    return reshape(t, (1, c, 1, 1))


class StyleBank:
    """Table of affine parameters indexed by style id."""

    def __init__(self, entries: Sequence[AffineParams]):
        entries = list(entries)
        if not entries:
            raise ValueError("a style bank needs at least one entry")
        channels = {e.channels for e in entries}
        if len(channels) != 1:
            raise ShapeError(f"style bank entries disagree on channel count: {sorted(channels)}")
        self.entries = entries

    @classmethod
    def create(cls, n_styles: int, channels: int) -> "StyleBank":
        return cls([AffineParams.create(channels) for _ in range(n_styles)])

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, style_id: int) -> AffineParams:
        if not 0 <= style_id < len(self.entries):
            raise IndexError(f"style id {style_id} outside [0, {len(self.entries)})")
        return self.entries[style_id]


@dataclass
class BatchNormState:
    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.1

    @classmethod
    def create(cls, channels: int) -> "BatchNormState":
        return cls(np.zeros(channels, dtype=np.float32), np.ones(channels, dtype=np.float32))


def _standardize(x: Tensor, axes) -> Tensor:
    n = int(np.prod([x.shape[a] for a in axes]))
    if n < 2:
        raise ShapeError(f"normalization over {n} element(s) is degenerate (shape {x.shape})")
    st = moments(x, axes)
    return div(sub(x, st.mu), st.sigma)


def batch_norm(x: Tensor, params: AffineParams, state: BatchNormState, training: bool) -> Tensor:
    if training:
        n = x.shape[0] * x.shape[2] * x.shape[3]
        if n < 2:
            raise ShapeError(f"batch_norm needs batch*height*width >= 2, got shape {x.shape}")
        st = moments(x, (0, 2, 3))
        mu = st.mu.data.reshape(-1)
        var = st.sigma.data.reshape(-1) ** 2 - EPS
        state.mean = ((1 - state.momentum) * state.mean + state.momentum * mu).astype(np.float32)
        state.var = ((1 - state.momentum) * state.var + state.momentum * var).astype(np.float32)
        z = div(sub(x, st.mu), st.sigma)
    else:
        c = x.shape[1]
        mu = Tensor(state.mean.reshape(1, c, 1, 1), dtype=x.dtype)
        sigma = Tensor(np.sqrt(state.var.reshape(1, c, 1, 1) + EPS), dtype=x.dtype)
        z = div(sub(x, mu), sigma)
    return params.apply(z)


def instance_norm(x: Tensor, params: AffineParams = None) -> Tensor:
    """Per-sample, per-channel spatial standardization, then optional affine."""
    z = _standardize(x, (2, 3))
    return z if params is None else params.apply(z)


def conditional_instance_norm(x: Tensor, bank: StyleBank, style_id: int) -> Tensor:
    return instance_norm(x, bank[style_id])


def adain(x: Tensor, y: Tensor) -> Tensor:
    """Standardize ``x`` per channel, then impose the spatial mean/std of ``y``."""
    if x.shape[:2] != y.shape[:2]:
        raise ShapeError(f"adain needs matching batch/channel dims, got {x.shape} and {y.shape}")
    c = _standardize(x, (2, 3))
    if y.shape[2] * y.shape[3] < 2:
        raise ShapeError(f"adain style input too small: {y.shape}")
    st = moments(y, (2, 3))
    return add(mul(c, st.sigma), st.mu)


def downsample_mask(mask: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Area max-pool: a target cell is on iff any source pixel assigned to it is on.

    Source pixel (r, c) belongs to cell (r * target_h // h, c * target_w // w),
    so the cells partition the source and a single pixel lights one cell.
    Growing a dimension falls back to nearest-neighbour sampling.
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    if target_h < 1 or target_w < 1:
        raise ValueError(f"target dims must be >= 1, got {target_h}x{target_w}")
    if (h, w) == (target_h, target_w):
        return mask.copy()
    if target_h > h:
        mask = mask[np.arange(target_h) * h // target_h]
    if target_w > w:
        mask = mask[:, np.arange(target_w) * w // target_w]
    h, w = mask.shape
    if (h, w) == (target_h, target_w):
        return mask.copy()
    if h % target_h == 0 and w % target_w == 0:
        fh, fw = h // target_h, w // target_w
        return mask.reshape(target_h, fh, target_w, fw).any(axis=(1, 3))
    out = np.zeros((target_h, target_w), dtype=bool)
    rows, cols = np.nonzero(mask)
    out[rows * target_h // h, cols * target_w // w] = True
    return out


@dataclass
class MaskSet:
    """Disjoint binary style-patch masks over one image, plus the implied background.

    Construction validates disjointness and the 2-pixel minimum per patch.
    """

    masks: List[np.ndarray] = field(default_factory=list)
    shape: tuple = None

    def __post_init__(self):
        self.masks = [np.asarray(m, dtype=bool) for m in self.masks]
        if self.shape is None:
            if not self.masks:
                raise ValueError("an empty MaskSet needs an explicit shape")
            self.shape = self.masks[0].shape
        self.shape = tuple(int(s) for s in self.shape)
        for i, m in enumerate(self.masks):
            if m.shape != self.shape:
                raise ShapeError(f"mask {i} has shape {m.shape}, expected {self.shape}")
            if m.sum() < 2:
                raise DegeneratePatch(f"mask {i} has {int(m.sum())} active pixel(s); need >= 2")
        if self.masks:
            overlap = np.sum(self.masks, axis=0) > 1
            if overlap.any():
                raise OverlappingMasks(f"{int(overlap.sum())} pixel(s) covered by more than one mask")

    @classmethod
    def empty(cls, h: int, w: int) -> "MaskSet":
        return cls([], (h, w))

    @classmethod
    def resolve(cls, masks: Sequence[np.ndarray], shape=None, drop_degenerate: bool = False) -> "MaskSet":
        """Build a MaskSet from possibly overlapping masks; lower index wins contested pixels.

        With ``drop_degenerate`` patches left with fewer than 2 pixels are
        folded into the background instead of raising.
        """
        taken = None
        kept = []
        for m in masks:
            m = np.asarray(m, dtype=bool)
            if taken is None:
                taken = np.zeros_like(m)
            m = m & ~taken
            if m.sum() < 2 and drop_degenerate:
                continue
            taken |= m
            kept.append(m)
        if shape is None and masks:
            shape = np.asarray(masks[0]).shape
        return cls(kept, shape)

    def __len__(self):
        return len(self.masks)

    @property
    def union(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=bool)
        for m in self.masks:
            out |= m
        return out

    @property
    def background(self) -> np.ndarray:
        return ~self.union

    def labels(self) -> np.ndarray:
        """Region id per pixel: 0 for background, i + 1 for patch i."""
        lab = np.zeros(self.shape, dtype=np.int32)
        for i, m in enumerate(self.masks):
            lab[m] = i + 1
        return lab

    def resized(self, h: int, w: int) -> "MaskSet":
        if (h, w) == self.shape:
            return self
        down = [downsample_mask(m, h, w) for m in self.masks]
        return MaskSet.resolve(down, (h, w), drop_degenerate=True)


def _as_maskset_list(masks: Union[MaskSet, Sequence[MaskSet]], n: int) -> List[MaskSet]:
    if isinstance(masks, MaskSet):
        return [masks] * n
    masks = list(masks)
    if len(masks) != n:
        raise ShapeError(f"got {len(masks)} mask sets for a batch of {n}")
    return masks


def patched_adain(x: Tensor, s_features: Tensor, masks: Union[MaskSet, Sequence[MaskSet]]) -> Tensor:
    """Region-wise AdaIN.

    ``x`` is standardized over its full spatial extent; every patch region
    and the background are then re-modulated with the masked statistics of
    ``s_features`` over that same region. ``masks`` is one MaskSet for the
    whole batch or one per sample.
    """
    if x.shape != s_features.shape:
        raise ShapeError(f"patched_adain needs equal shapes, got {x.shape} and {s_features.shape}")
    n, _, h, w = x.shape
    sets = _as_maskset_list(masks, n)
    for ms in sets:
        if ms.shape != (h, w):
            raise ShapeError(f"mask set of shape {ms.shape} does not match features {x.shape}")
    c = _standardize(x, (2, 3))

    n_patches = max(len(ms) for ms in sets)
    regions = []
    for r in range(n_patches):
        regions.append(np.stack([ms.masks[r] if r < len(ms) else np.zeros((h, w), bool) for ms in sets]))
    regions.append(np.stack([ms.background for ms in sets]))

    sigma_map = mu_map = None
    for region in regions:
        m = region[:, None].astype(x.dtype)
        st = masked_moments_unchecked(s_features, m)
        sm, mm = mul(st.sigma, m), mul(st.mu, m)
        sigma_map = sm if sigma_map is None else add(sigma_map, sm)
        mu_map = mm if mu_map is None else add(mu_map, mm)
    return add(mul(c, sigma_map), mu_map)
