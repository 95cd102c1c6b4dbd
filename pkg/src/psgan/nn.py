"""Small module system: parameter containers with deterministic naming."""

from __future__ import annotations

from typing import Dict, Iterator, Tuple

import numpy as np

from psgan.autodiff import Tensor, conv2d, conv2d_transpose
from psgan.norm import AffineParams, instance_norm

INIT_STD = 0.02


class Module:
    """Base class. Parameters and sub-modules are discovered from attributes
    in assignment order, which fixes the checkpoint record order."""

    training = True

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for key, value in vars(self).items():
            yield from _walk(value, f"{prefix}{key}")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        own = dict(self.named_parameters())
        missing = own.keys() - state.keys()
        extra = state.keys() - own.keys()
        if missing or extra:
            raise KeyError(f"state mismatch: missing {sorted(missing)[:5]}, unexpected {sorted(extra)[:5]}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != expected {p.shape}")
            p.data = arr.astype(p.dtype, copy=True)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def modules(self):
        yield self
        for value in vars(self).values():
            items = value if isinstance(value, (list, tuple)) else [value]
            for item in items:
                if isinstance(item, Module):
                    yield from item.modules()

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def _walk(value, name):
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield name, value
    elif isinstance(value, Module):
        yield from value.named_parameters(name + ".")
    elif isinstance(value, AffineParams):
        yield name + ".gamma", value.gamma
        yield name + ".beta", value.beta
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{name}.{i}")


def _param(arr) -> Tensor:
    return Tensor(arr, requires_grad=True)


class Conv2d(Module):
    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0, rng=None, std=INIT_STD):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = _param(rng.normal(0.0, std, (out_ch, in_ch, kernel, kernel)))
        self.bias = _param(np.zeros(out_ch))
        self.stride, self.padding = stride, padding

    def __call__(self, x):
        return conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2d(Module):
    def __init__(self, in_ch, out_ch, kernel, stride=1, padding=0, rng=None, std=INIT_STD):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = _param(rng.normal(0.0, std, (in_ch, out_ch, kernel, kernel)))
        self.bias = _param(np.zeros(out_ch))
        self.stride, self.padding = stride, padding

    def __call__(self, x):
        return conv2d_transpose(x, self.weight, self.bias, self.stride, self.padding)


class InstanceNorm2d(Module):
    def __init__(self, channels, affine=True):
        self.params = AffineParams.create(channels) if affine else None

    def __call__(self, x):
        return instance_norm(x, self.params)
