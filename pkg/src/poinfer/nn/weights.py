"""Parameter storage, initialization and the POW1 binary weight format."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..exceptions import FormatError, ShapeError
from .layers import BatchNorm, Conv, NetworkSpec

MAGIC = b"POW1"
VERSION = 1


class WeightStore:
    """Immutable mapping ``layer name -> {parameter name -> float32 array}``.

    FC weights are ``(inputs, outputs)``; conv weights are ``(k, k, in, out)``.
    """

    def __init__(self, entries: dict):
        frozen = {}
        for layer, params in entries.items():
            frozen[layer] = {}
            for key, value in params.items():
                arr = np.array(value, dtype=np.float32)
                if not np.all(np.isfinite(arr)):
                    raise ShapeError(f"{layer}.{key} contains non-finite values")
                arr.flags.writeable = False
                frozen[layer][key] = arr
        self._entries = frozen

    def __getitem__(self, layer: str) -> dict:
        return self._entries[layer]

    def __contains__(self, layer: str) -> bool:
        return layer in self._entries

    def __iter__(self):
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightStore) or self.tensors().keys() != other.tensors().keys():
            return False
        return all(np.array_equal(a, other.tensors()[k]) for k, a in self.tensors().items())

    def __repr__(self) -> str:
        shapes = {k: v.shape for k, v in self.tensors().items()}
        return f"WeightStore({shapes})"

    def tensors(self) -> dict:
        """Flat view keyed ``"layer.param"``."""
        return {f"{layer}.{key}": arr for layer, params in self._entries.items() for key, arr in params.items()}

    @classmethod
    def from_tensors(cls, tensors: dict) -> "WeightStore":
        entries: dict = {}
        for name, arr in tensors.items():
            layer, _, key = name.rpartition(".")
            if not layer:
                raise FormatError(f"tensor name {name!r} is not of the form layer.param")
            entries.setdefault(layer, {})[key] = arr
        return cls(entries)

    def replace(self, layer: str, **params) -> "WeightStore":
        entries = {name: dict(p) for name, p in self._entries.items()}
        entries[layer].update(params)
        return WeightStore(entries)

    def with_entries(self, entries: dict) -> "WeightStore":
        merged = {name: dict(p) for name, p in self._entries.items()}
        for layer, params in entries.items():
            merged.setdefault(layer, {}).update(params)
        return WeightStore(merged)

    def validate(self, net: NetworkSpec) -> None:
        for i, layer in enumerate(net.layers):
            if not hasattr(layer, "param_shapes"):
                continue
            if layer.name not in self._entries:
                raise ShapeError(f"missing parameters for {layer.name}", i)
            for key, shape in layer.param_shapes().items():
                got = self._entries[layer.name].get(key)
                if got is None:
                    raise ShapeError(f"missing {layer.name}.{key}", i)
                if got.shape != tuple(shape):
                    raise ShapeError(f"{layer.name}.{key} has shape {got.shape}, expected {tuple(shape)}", i)


def init_weights(net: NetworkSpec, seed: int = 0) -> WeightStore:
    """He-uniform weights scaled by fan-in, zero biases, identity batch norm."""
    rng = np.random.default_rng(seed)
    entries = {}
    for layer in net.parametric_layers():
        shapes = layer.param_shapes()
        if isinstance(layer, BatchNorm):
            c = layer.channels
            entries[layer.name] = {"gamma": np.ones(c), "beta": np.zeros(c), "mean": np.zeros(c), "var": np.ones(c)}
            continue
        shape = shapes["weight"]
        fan_in = layer.kernel**2 * layer.in_channels if isinstance(layer, Conv) else layer.inputs
        limit = np.sqrt(6.0 / fan_in)
        entries[layer.name] = {"weight": rng.uniform(-limit, limit, shape), "bias": np.zeros(shapes["bias"])}
    return WeightStore(entries)


def save_weights(path, store: WeightStore) -> None:
    tensors = store.tensors()
    out = bytearray(MAGIC)
    out += struct.pack("<II", VERSION, len(tensors))
    for name, arr in tensors.items():
        encoded = name.encode("utf-8")
        out += struct.pack("<I", len(encoded)) + encoded
        out += struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(out))


def load_weights(path) -> WeightStore:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise FormatError(f"{path}: truncated at byte {pos}")
        values = struct.unpack_from(fmt, data, pos)
        pos += size
        return values

    version, count = take("<II")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    tensors = {}
    for _ in range(count):
        (length,) = take("<I")
        if pos + length > len(data):
            raise FormatError(f"{path}: truncated name at byte {pos}")
        name = data[pos : pos + length].decode("utf-8")
        pos += length
        (rank,) = take("<I")
        dims = take(f"<{rank}I") if rank else ()
        size = int(np.prod(dims)) * 4
        if pos + size > len(data):
            raise FormatError(f"{path}: truncated values for {name}")
        tensors[name] = np.frombuffer(data, dtype="<f4", count=size // 4, offset=pos).reshape(dims)
        pos += size
    if pos != len(data):
        raise FormatError(f"{path}: {len(data) - pos} trailing bytes")
    return WeightStore.from_tensors(tensors)
