"""Layer and network descriptions with shape checking."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ShapeError


@dataclass(frozen=True)
class Conv:
    name: str
    kernel: int
    in_channels: int
    out_channels: int

    def output_shape(self, shape):
        if len(shape) != 3 or shape[2] != self.in_channels:
            raise ShapeError(f"{self.name} expects (H, W, {self.in_channels}) input, got {tuple(shape)}")
        return (shape[0], shape[1], self.out_channels)

    def param_shapes(self) -> dict:
        return {"weight": (self.kernel, self.kernel, self.in_channels, self.out_channels), "bias": (self.out_channels,)}


@dataclass(frozen=True)
class FC:
    name: str
    inputs: int
    outputs: int

    def output_shape(self, shape):
        if int(np.prod(shape)) != self.inputs:
            raise ShapeError(f"{self.name} expects {self.inputs} inputs, got shape {tuple(shape)}")
        return (self.outputs,)

    def param_shapes(self) -> dict:
        return {"weight": (self.inputs, self.outputs), "bias": (self.outputs,)}


@dataclass(frozen=True)
class ReLU:
    def output_shape(self, shape):
        return tuple(shape)


@dataclass(frozen=True)
class MaxPool:
    size: int = 2

    def output_shape(self, shape):
        if len(shape) != 3:
            raise ShapeError(f"max pooling expects (H, W, C) input, got {tuple(shape)}")
        return (shape[0] // self.size, shape[1] // self.size, shape[2])


@dataclass(frozen=True)
class BatchNorm:
    name: str
    channels: int
    eps: float = 1e-5

    def output_shape(self, shape):
        if shape[-1] != self.channels:
            raise ShapeError(f"{self.name} expects {self.channels} channels, got shape {tuple(shape)}")
        return tuple(shape)

    def param_shapes(self) -> dict:
        c = (self.channels,)
        return {"gamma": c, "beta": c, "mean": c, "var": c}


@dataclass(frozen=True)
class Dropout:
    rate: float = 0.5

    def output_shape(self, shape):
        return tuple(shape)


@dataclass(frozen=True)
class Softmax:
    def output_shape(self, shape):
        if len(shape) != 1:
            raise ShapeError(f"softmax expects a flat vector, got shape {tuple(shape)}")
        return tuple(shape)


LINEAR = (Conv, FC)


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layers applied to inputs of ``input_shape`` (H, W, C)."""

    layers: tuple
    input_shape: tuple
    name: str = "custom"
    shapes: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        shape = tuple(self.input_shape)
        shapes = [shape]
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.output_shape(shape)
            except ShapeError as exc:
                raise ShapeError(str(exc), i) from None
            shapes.append(shape)
        if not self.layers or not isinstance(self.layers[-1], Softmax):
            raise ShapeError("the last layer must be a softmax")
        names = [layer.name for layer in self.layers if hasattr(layer, "name")]
        if len(set(names)) != len(names):
            raise ShapeError(f"layer names must be unique, got {names}")
        object.__setattr__(self, "shapes", tuple(shapes))

    @property
    def classes(self) -> int:
        return self.shapes[-1][0]

    def linear_layers(self) -> list:
        return [layer for layer in self.layers if isinstance(layer, LINEAR)]

    def parametric_layers(self) -> list:
        return [layer for layer in self.layers if hasattr(layer, "param_shapes")]

    def input_shape_of(self, name: str) -> tuple:
        for i, layer in enumerate(self.layers):
            if getattr(layer, "name", None) == name:
                return self.shapes[i]
        raise KeyError(name)

    def layer(self, name: str):
        for layer in self.layers:
            if getattr(layer, "name", None) == name:
                return layer
        raise KeyError(name)


def mnist_cnn() -> NetworkSpec:
    layers = (
        Conv("conv1", 3, 1, 32), ReLU(), MaxPool(),
        Conv("conv2", 3, 32, 64), ReLU(), MaxPool(),
        FC("fc1", 7 * 7 * 64, 10), Softmax(),
    )
    return NetworkSpec(layers, (28, 28, 1), "mnist-cnn")


def cifar_cnn() -> NetworkSpec:
    layers = []
    blocks = [(3, 32), (32, 32), None, (32, 64), (64, 64), None, (64, 128), (128, 128), None]
    idx = 0
    for block in blocks:
        if block is None:
            layers.append(MaxPool())
            continue
        idx += 1
        cin, cout = block
        layers += [Conv(f"conv{idx}", 3, cin, cout), BatchNorm(f"bn{idx}", cout), ReLU()]
    layers += [FC("fc1", 4 * 4 * 128, 128), ReLU(), Dropout(0.5), FC("fc2", 128, 10), Softmax()]
    return NetworkSpec(tuple(layers), (32, 32, 3), "cifar-cnn")


ARCHITECTURES = {"mnist-cnn": mnist_cnn, "cifar-cnn": cifar_cnn}


def architecture(name: str) -> NetworkSpec:
    try:
        return ARCHITECTURES[name]()
    except KeyError:
        raise ShapeError(f"unknown architecture {name!r}; expected one of {sorted(ARCHITECTURES)}") from None
