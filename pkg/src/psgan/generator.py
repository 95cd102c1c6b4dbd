"""Style-conditioned ResNet encoder/decoder generator with a style branch."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Union

import numpy as np

from psgan.autodiff import Tensor, add, dropout, relu, tanh
from psgan.errors import ShapeError
from psgan.nn import Conv2d, ConvTranspose2d, InstanceNorm2d, Module
from psgan.norm import MaskSet, patched_adain


@dataclass(frozen=True)
class GeneratorConfig:
    base_channels: int = 32
    n_resblocks: int = 6
    n_downsamples: int = 2
    dropout_rate: float = 0.5
    image_size: int = 64

    def __post_init__(self):
        if self.n_resblocks < 1:
            raise ValueError(f"n_resblocks must be >= 1, got {self.n_resblocks}")
        if self.n_downsamples < 0 or self.base_channels < 1:
            raise ValueError("n_downsamples must be >= 0 and base_channels >= 1")
        if self.image_size % (2 ** self.n_downsamples):
            raise ValueError(f"image_size {self.image_size} not divisible by 2**{self.n_downsamples}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def bottleneck_channels(self) -> int:
        return self.base_channels * 2 ** self.n_downsamples

    def to_dict(self):
        return asdict(self)


def he_std(in_channels: int, kernel: int) -> float:
    return float(np.sqrt(2.0 / (in_channels * kernel * kernel)))


class ConditionedResBlock(Module):
    """conv -> IN -> ReLU -> dropout -> conv -> PatchedAdaIN, plus the skip."""

    def __init__(self, channels: int, dropout_rate: float, rng):
        self.conv1 = Conv2d(channels, channels, 3, 1, 1, rng=rng)
        self.norm1 = InstanceNorm2d(channels)
        self.conv2 = Conv2d(channels, channels, 3, 1, 1, rng=rng)
        self.dropout_rate = dropout_rate

    def residual(self, x, rng):
        h = relu(self.norm1(self.conv1(x)))
        h = dropout(h, self.dropout_rate, self.training, rng)
        return self.conv2(h)

    def __call__(self, x, style_features, masks, rng=None):
        return resblock_forward(x, style_features, masks, self, self.training, rng)


def resblock_forward(x, style_features, masks, block: ConditionedResBlock, training: bool, rng=None):
    if x.shape[1] != block.conv1.weight.shape[1]:
        raise ShapeError(f"resblock expects {block.conv1.weight.shape[1]} channels, got {x.shape}")
    was = block.training
    block.training = training
    try:
        h = block.residual(x, rng)
    finally:
        block.training = was
    return add(x, patched_adain(h, style_features, masks))


class PlainResBlock(ConditionedResBlock):
    """Unnormalized residual block for the style branch: x + conv(relu(conv(x)))."""

    def __init__(self, channels: int, dropout_rate: float, rng):
        self.conv1 = Conv2d(channels, channels, 3, 1, 1, rng=rng, std=he_std(channels, 3))
        self.conv2 = Conv2d(channels, channels, 3, 1, 1, rng=rng, std=he_std(channels, 3))
        self.dropout_rate = dropout_rate

    def residual(self, x, rng):
        h = relu(self.conv1(x))
        h = dropout(h, self.dropout_rate, self.training, rng)
        return self.conv2(h)

    def __call__(self, x, rng=None):
        return add(x, self.residual(x, rng))


class StyleBranch(Module):
    """Copy of the main encoder plus one residual block, without normalization.

    Instance norm would strip each image's per-channel means, which are
    exactly the colour statistics the conditioning layers transfer, and would
    let a change anywhere in the style image shift features everywhere.
    Emits the output of every downsampling convolution (one per encoder
    conditioning site) and, last, the residual block output that conditions
    the main network's ResBlocks. With no normalization to rescale them, the
    convolutions use variance-preserving (He) initialization.
    """

    def __init__(self, config: GeneratorConfig, rng):
        c = config.base_channels
        self.stem = Conv2d(3, c, 7, 1, 3, rng=rng, std=he_std(3, 7))
        self.downs = [Conv2d(c * 2 ** i, c * 2 ** (i + 1), 3, 2, 1, rng=rng, std=he_std(c * 2 ** i, 3))
                      for i in range(config.n_downsamples)]
        self.block = PlainResBlock(config.bottleneck_channels, config.dropout_rate, rng)

    def __call__(self, style: Tensor, rng=None) -> List[Tensor]:
        h = relu(self.stem(style))
        pyramid = []
        for conv in self.downs:
            f = conv(h)
            pyramid.append(f)
            h = relu(f)
        pyramid.append(self.block(h, rng))
        return pyramid


class Generator(Module):
    """``G(content, style, masks) -> image`` in [-1, 1]."""

    def __init__(self, config: GeneratorConfig = None, seed: int = 0):
        self.config = config or GeneratorConfig()
        cfg = self.config
        rng = np.random.default_rng(seed)
        c = cfg.base_channels
        self.stem = Conv2d(3, c, 7, 1, 3, rng=rng)
        self.stem_norm = InstanceNorm2d(c)
        self.downs = [Conv2d(c * 2 ** i, c * 2 ** (i + 1), 3, 2, 1, rng=rng)
                      for i in range(cfg.n_downsamples)]
        self.blocks = [ConditionedResBlock(cfg.bottleneck_channels, cfg.dropout_rate, rng)
                       for _ in range(cfg.n_resblocks)]
        # no normalization in the decoder: it would erase the per-image colour
        # statistics just injected by the conditioning layers
        self.ups = [ConvTranspose2d(c * 2 ** (i + 1), c * 2 ** i, 4, 2, 1, rng=rng, std=he_std(c * 2 ** (i + 1), 2))
                    for i in reversed(range(cfg.n_downsamples))]
        self.head = Conv2d(c, 3, 7, 1, 3, rng=rng)
        self.style_branch = StyleBranch(cfg, rng)

    def __call__(self, content, style, masks, rng=None):
        return generator_forward(self, content, style, masks, self.training, rng)


def _mask_list(masks, n, h, w) -> List[MaskSet]:
    if masks is None:
        return [MaskSet.empty(h, w)] * n
    if isinstance(masks, MaskSet):
        masks = [masks] * n
    masks = list(masks)
    if len(masks) != n:
        raise ShapeError(f"got {len(masks)} mask sets for a batch of {n}")
    return masks


def generator_forward(gen: Generator, content: Tensor, style: Tensor,
                      masks: Union[None, MaskSet, Sequence[MaskSet]], training: bool,
                      rng: Optional[np.random.Generator] = None) -> Tensor:
    """Run the generator; ``masks`` are at input resolution (one set per sample).

    Any spatial size divisible by ``2 ** n_downsamples`` is accepted, the
    network being fully convolutional.
    """
    cfg = gen.config
    if content.shape != style.shape or content.ndim != 4 or content.shape[1] != 3:
        raise ShapeError(f"content {content.shape} and style {style.shape} must both be N x 3 x H x W")
    n, _, h, w = content.shape
    step = 2 ** cfg.n_downsamples
    if h % step or w % step:
        raise ShapeError(f"spatial dims {h}x{w} not divisible by {step}")
    sets = _mask_list(masks, n, h, w)
    gen.train(training)

    pyramid = gen.style_branch(style, rng)
    x = relu(gen.stem_norm(gen.stem(content)))
    for conv, s_feat in zip(gen.downs, pyramid):
        x = conv(x)
        level = [ms.resized(*x.shape[2:]) for ms in sets]
        x = relu(patched_adain(x, s_feat, level))
    bottleneck = [ms.resized(*x.shape[2:]) for ms in sets]
    for block in gen.blocks:
        x = block(x, pyramid[-1], bottleneck, rng)
    for up in gen.ups:
        x = relu(up(x))
    return tanh(gen.head(x))


def style_branch_forward(gen: Generator, style: Tensor, training: bool = False, rng=None) -> List[Tensor]:
    gen.style_branch.train(training)
    return gen.style_branch(style, rng)
