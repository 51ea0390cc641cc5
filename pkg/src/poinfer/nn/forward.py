"""Batched inference in numpy, accuracy, and batch-norm folding."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import ShapeError
from .layers import FC, BatchNorm, Conv, Dropout, MaxPool, NetworkSpec, ReLU, Softmax
from .weights import WeightStore

CHUNK = 250


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Same-padded stride-1 convolution of ``(B, H, W, C)`` with ``(k, k, C, N)``."""
    r = weight.shape[0] // 2
    padded = np.pad(x, ((0, 0), (r, r), (r, r), (0, 0)))
    windows = sliding_window_view(padded, weight.shape[:2], axis=(1, 2))
    return np.tensordot(windows, weight, axes=([4, 5, 3], [0, 1, 2])) + bias


def max_pool(x: np.ndarray, size: int) -> np.ndarray:
    b, h, w, c = x.shape
    h2, w2 = h // size, w // size
    x = x[:, : h2 * size, : w2 * size]
    return x.reshape(b, h2, size, w2, size, c).max(axis=(2, 4))


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _apply(layer, x, weights, index):
    if isinstance(layer, Conv):
        p = weights[layer.name]
        return conv2d(x, p["weight"].astype(np.float64), p["bias"].astype(np.float64))
    if isinstance(layer, FC):
        p = weights[layer.name]
        return x.reshape(len(x), -1) @ p["weight"].astype(np.float64) + p["bias"].astype(np.float64)
    if isinstance(layer, ReLU):
        return np.maximum(x, 0.0)
    if isinstance(layer, MaxPool):
        return max_pool(x, layer.size)
    if isinstance(layer, BatchNorm):
        p = {k: v.astype(np.float64) for k, v in weights[layer.name].items()}
        return (x - p["mean"]) / np.sqrt(p["var"] + layer.eps) * p["gamma"] + p["beta"]
    if isinstance(layer, (Dropout, Softmax)):
        return x
    raise ShapeError(f"unsupported layer {layer!r}", index)


def logits(net: NetworkSpec, weights: WeightStore, inputs) -> np.ndarray:
    """Pre-softmax outputs for a batch ``(B, H, W, C)`` or a single input."""
    weights.validate(net)
    x = np.asarray(inputs, dtype=np.float64)
    single = x.shape == tuple(net.input_shape)
    if single:
        x = x[None]
    if x.shape[1:] != tuple(net.input_shape):
        raise ShapeError(f"input shape {x.shape[1:]} does not match network input {tuple(net.input_shape)}", 0)
    parts = []
    for start in range(0, len(x), CHUNK):
        h = x[start : start + CHUNK]
        for i, layer in enumerate(net.layers):
            h = _apply(layer, h, weights, i)
        parts.append(h)
    out = np.concatenate(parts) if parts else np.zeros((0, net.classes))
    return out[0] if single else out


def forward(net: NetworkSpec, weights: WeightStore, inputs) -> np.ndarray:
    """Class probabilities; dropout is the identity."""
    return softmax(logits(net, weights, inputs))


def predict(net: NetworkSpec, weights: WeightStore, inputs) -> np.ndarray:
    # argmax returns the lowest index among ties
    return np.argmax(logits(net, weights, inputs), axis=-1)


def evaluate_accuracy(net: NetworkSpec, weights: WeightStore, data) -> float:
    if len(data) == 0:
        raise ShapeError("cannot evaluate accuracy on an empty dataset")
    return float(np.mean(predict(net, weights, data.images) == data.labels))


def fold_batchnorm(net: NetworkSpec, weights: WeightStore) -> tuple[NetworkSpec, WeightStore]:
    """Merge every batch-norm layer into the linear layer right before it."""
    layers = []
    entries = {name: dict(weights[name]) for name in weights}
    for i, layer in enumerate(net.layers):
        if not isinstance(layer, BatchNorm):
            layers.append(layer)
            continue
        prev = layers[-1] if layers else None
        if not isinstance(prev, (Conv, FC)):
            raise ShapeError(f"{layer.name} does not directly follow a conv or FC layer", i)
        bn = {k: v.astype(np.float64) for k, v in entries.pop(layer.name).items()}
        factor = bn["gamma"] / np.sqrt(bn["var"] + layer.eps)
        p = entries[prev.name]
        entries[prev.name] = {
            "weight": p["weight"].astype(np.float64) * factor,
            "bias": (p["bias"].astype(np.float64) - bn["mean"]) * factor + bn["beta"],
        }
    return NetworkSpec(tuple(layers), net.input_shape, net.name), WeightStore(entries)
