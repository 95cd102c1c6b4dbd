"""Conditional PatchGAN discriminator and the adversarial / L1 objectives."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from psgan.autodiff import Tensor, add, bce_with_logits, concat, l1_loss, leaky_relu, mul
from psgan.errors import ShapeError
from psgan.nn import Conv2d, InstanceNorm2d, Module


@dataclass(frozen=True)
class DiscriminatorConfig:
    base_channels: int = 64
    n_layers: int = 3
    slope: float = 0.2

    def to_dict(self):
        return asdict(self)


class Discriminator(Module):
    """Stride-2 conv stack ending in a 1-channel logit map (one logit per patch).

    The first layer has no normalization; the rest use instance norm.
    """

    def __init__(self, config: DiscriminatorConfig = None, in_channels: int = 6, seed: int = 1):
        self.config = config or DiscriminatorConfig()
        cfg = self.config
        rng = np.random.default_rng(seed)
        self.convs = []
        self.norms = []
        ch = in_channels
        for i in range(cfg.n_layers):
            out = cfg.base_channels * 2 ** i
            self.convs.append(Conv2d(ch, out, 4, 2, 1, rng=rng))
            self.norms.append(InstanceNorm2d(out) if i > 0 else None)
            ch = out
        self.head = Conv2d(ch, 1, 3, 1, 1, rng=rng)

    def __call__(self, image: Tensor, content: Tensor) -> Tensor:
        return discriminator_forward(self, image, content)


def discriminator_forward(disc: Discriminator, image: Tensor, content: Tensor) -> Tensor:
    if image.shape != content.shape:
        raise ShapeError(f"discriminator inputs differ in shape: {image.shape} vs {content.shape}")
    h = concat([image, content], axis=1)
    for conv, norm in zip(disc.convs, disc.norms):
        h = conv(h)
        if norm is not None:
            h = norm(h)
        h = leaky_relu(h, disc.config.slope)
    return disc.head(h)


def generator_loss_terms(fake_logits: Tensor, fake_img: Tensor, target_img, lambda_l1: float):
    """Non-saturating adversarial term plus weighted L1: ``(total, l1, adversarial)``."""
    adv = bce_with_logits(fake_logits, 1.0)
    l1 = l1_loss(fake_img, target_img)
    return add(adv, mul(l1, float(lambda_l1))), l1, adv


def generator_loss(fake_logits: Tensor, fake_img: Tensor, target_img, cfg) -> Tensor:
    """``cfg`` is anything with a ``lambda_l1`` attribute, or the weight itself."""
    weight = getattr(cfg, "lambda_l1", cfg)
    return generator_loss_terms(fake_logits, fake_img, target_img, weight)[0]


def discriminator_loss(real_logits: Tensor, fake_logits: Tensor) -> Tensor:
    return mul(add(bce_with_logits(real_logits, 1.0), bce_with_logits(fake_logits, 0.0)), 0.5)
