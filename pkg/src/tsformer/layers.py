"""Parameter containers for the network's building blocks."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .tensor import Parameter, Tensor, conv2d, layer_norm, prelu


class Module:
    """Minimal parameter container.

    Parameters, sub-modules and lists of sub-modules assigned as attributes
    are discovered in assignment order, which fixes parameter names and the
    checkpoint record order.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for attr, value in vars(self).items():
            path = f"{prefix}{attr}"
            if isinstance(value, Parameter):
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def assign_names(self, prefix: str = "") -> None:
        for name, p in self.named_parameters(prefix):
            p.name = name

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Conv2d(Module):
    def __init__(self, cin: int, cout: int, kernel: int, rng: np.random.Generator,
                 mode: str = "standard", stride: int = 1, bias: bool = True):
        if mode == "depthwise":
            if cin != cout:
                raise ValueError("depthwise conv keeps the channel count")
            shape, fan_in = (cout, 1, kernel, kernel), kernel * kernel
        else:
            shape, fan_in = (cout, cin, kernel, kernel), cin * kernel * kernel
        self.weight = Parameter(_uniform(rng, shape, fan_in), "weight")
        if bias:
            self.bias = Parameter(np.zeros(cout, np.float32), "bias")
        else:
            self.bias = None
        self.mode = mode
        self.stride = stride

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.mode, self.stride)


class SeparableConv2d(Module):
    """Depthwise ``k x k`` followed by a pointwise channel mix."""

    def __init__(self, cin: int, cout: int, kernel: int, rng: np.random.Generator, stride: int = 1):
        self.depthwise = Conv2d(cin, cin, kernel, rng, mode="depthwise", stride=stride)
        self.pointwise = Conv2d(cin, cout, 1, rng, mode="pointwise")

    def forward(self, x: Tensor) -> Tensor:
        return self.pointwise(self.depthwise(x))


def make_conv3x3(cin: int, cout: int, rng: np.random.Generator, kind: str, stride: int = 1) -> Module:
    if kind == "full":
        return Conv2d(cin, cout, 3, rng, stride=stride)
    if kind == "separable":
        return SeparableConv2d(cin, cout, 3, rng, stride=stride)
    raise ValueError(f"unknown conv kind {kind!r}; expected 'full' or 'separable'")


class LayerNorm(Module):
    def __init__(self, channels: int, eps: float = 1e-6):
        self.gamma = Parameter(np.ones(channels, np.float32), "gamma")
        self.beta = Parameter(np.zeros(channels, np.float32), "beta")
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)


class PReLU(Module):
    def __init__(self, channels: int, init: float = 0.25):
        self.alpha = Parameter(np.full(channels, init, np.float32), "alpha")

    def forward(self, x: Tensor) -> Tensor:
        return prelu(x, self.alpha)
