"""Convolution packing with one broadcast polynomial per kernel entry.

The input image (height x width x channels) occupies consecutive blocks of
``height * width`` slots, one block per channel. For each kernel entry the
input is rotated once by the entry's spatial offset; a weight polynomial holds
that entry's value broadcast over its channel block, masked to the positions
where the shifted pixel lies inside the image (same padding, stride 1).
Channel blocks are summed with a rotate-and-sum, leaving each output feature
map in the first block of its own ciphertext.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..exceptions import HEError, ShapeError
from ..he.evaluator import Evaluator
from .groups import CONV_SCHEMES, group_count
from .packed import PackedLayer, check_input, encode_payload, next_pow2, plan_sets, product_position


@dataclass(frozen=True)
class ConvLayout:
    height: int
    width: int
    in_channels: int
    out_channels: int
    kernel: int
    scheme: str
    slots: int
    kind: str = "conv"

    def __post_init__(self):
        if self.scheme not in CONV_SCHEMES:
            raise ShapeError(f"unknown conv grouping {self.scheme!r}; expected one of {CONV_SCHEMES}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ShapeError(f"kernel size must be odd, got {self.kernel}")
        need = self.channel_span * self.block
        if need > self.slots:
            raise HEError(
                f"{self.height}x{self.width}x{self.in_channels} input needs {need} slots, only {self.slots} available"
            )

    @property
    def block(self) -> int:
        return self.height * self.width

    @property
    def channel_span(self) -> int:
        return next_pow2(self.in_channels)

    @property
    def entries(self) -> list[tuple[int, int]]:
        return [(dy, dx) for dy in range(self.kernel) for dx in range(self.kernel)]

    def offset(self, entry: int) -> int:
        dy, dx = self.entries[entry]
        r = self.kernel // 2
        return ((dy - r) * self.width + (dx - r)) % self.slots

    @cached_property
    def rotated_offsets(self) -> list[int]:
        """Distinct nonzero input rotations, in first-use order."""
        seen = []
        for e in range(self.kernel**2):
            off = self.offset(e)
            if off and off not in seen:
                seen.append(off)
        return seen

    @cached_property
    def masks(self) -> np.ndarray:
        r = self.kernel // 2
        ys, xs = np.divmod(np.arange(self.block), self.width)
        out = np.empty((self.kernel**2, self.block))
        for e, (dy, dx) in enumerate(self.entries):
            y, x = ys + dy - r, xs + dx - r
            out[e] = (y >= 0) & (y < self.height) & (x >= 0) & (x < self.width)
        return out

    @property
    def group_count(self) -> int:
        shape = (self.kernel, self.kernel, self.in_channels, self.out_channels)
        return group_count(shape, self.scheme)

    @property
    def output_count(self) -> int:
        return self.out_channels

    @property
    def polys_per_filter(self) -> int:
        k2 = self.kernel**2
        return k2 if self.scheme == "filter" else k2 * self.in_channels

    def group_entries(self, g: int) -> list[tuple[int, int | None, int]]:
        """(filter, channel or None for all channels, kernel entry) per polynomial of group ``g``."""
        k2 = self.kernel**2
        if self.scheme == "filter":
            return [(g, None, e) for e in range(k2)]
        if self.scheme == "kernel":
            n, c = divmod(g, self.in_channels)
            return [(n, c, e) for e in range(k2)]
        nc, e = divmod(g, k2)
        n, c = divmod(nc, self.in_channels)
        return [(n, c, e)]

    def filter_groups(self, n: int) -> range:
        per = self.group_count // self.out_channels
        return range(n * per, (n + 1) * per)

    def rotation_steps(self) -> list[int]:
        reduce = [self.block << t for t in range(int(math.log2(self.channel_span)))]
        return self.rotated_offsets + reduce

    def input_vector(self, image) -> np.ndarray:
        image = np.asarray(image, dtype=np.float64)
        expect = (self.height, self.width, self.in_channels)
        if image.shape != expect:
            raise ShapeError(f"expected image of shape {expect}, got {image.shape}")
        v = np.zeros(self.slots)
        v[: self.in_channels * self.block] = image.transpose(2, 0, 1).ravel()
        return v

    def group_vectors(self, W: np.ndarray, g: int) -> list[np.ndarray]:
        out = []
        channels = range(self.in_channels)
        for n, c, e in self.group_entries(g):
            dy, dx = self.entries[e]
            v = np.zeros(self.slots)
            for ch in channels if c is None else (c,):
                v[ch * self.block : (ch + 1) * self.block] = W[dy, dx, ch, n] * self.masks[e]
            out.append(v)
        return out

    def bias_vectors(self, b: np.ndarray) -> list[np.ndarray]:
        out = []
        for n in range(self.out_channels):
            v = np.zeros(self.slots)
            v[: self.block] = b[n]
            out.append(v)
        return out

    def read_output(self, decoded: list[np.ndarray]) -> np.ndarray:
        maps = [np.asarray(d[: self.block]).reshape(self.height, self.width) for d in decoded]
        return np.stack(maps, axis=-1)


def pack_conv(W, b, input_shape, plan, backend, keys, scheme: str = "filter", mode: str = "relin-only",
              name: str = "conv", input_level: int | None = None, input_scale: float | None = None) -> PackedLayer:
    """Encode a ``(k, k, in, out)`` kernel for an input of shape ``(height, width, in)``."""
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).ravel()
    if W.ndim != 4 or W.shape[0] != W.shape[1] or b.size != W.shape[3]:
        raise ShapeError(f"conv weights {W.shape} and bias {b.shape} do not match")
    height, width, channels = input_shape
    if channels != W.shape[2]:
        raise ShapeError(f"input has {channels} channels, kernel expects {W.shape[2]}")
    layout = ConvLayout(height, width, channels, W.shape[3], W.shape[0], scheme, backend.params.slot_count)
    hidden, bias_hidden = plan_sets(plan, scheme, layout.group_count)
    level = backend.params.depth if input_level is None else input_level
    scale = backend.params.scale if input_scale is None else input_scale
    groups = [
        encode_payload(layout.group_vectors(W, g), g in hidden, backend, keys, level, backend.params.scale)
        for g in range(layout.group_count)
    ]
    out_level, out_scale = product_position(backend, mode, level, scale)
    bias = encode_payload(layout.bias_vectors(b), bias_hidden, backend, keys, out_level, out_scale)
    dims = {"height": height, "width": width, "kernel": layout.kernel,
            "in_channels": channels, "out_channels": layout.out_channels}
    return PackedLayer(name, scheme, layout, groups, hidden, bias, bias_hidden, mode, level, scale, dims)


def encrypt_conv_input(packed: PackedLayer, image, backend, keys):
    return backend.encrypt(backend.encode(packed.layout.input_vector(image), packed.input_level, packed.input_scale), keys)


def eval_conv_he(packed: PackedLayer, ct, backend, keys, evaluator: Evaluator | None = None):
    """Homomorphic same-padded convolution; one output ciphertext per filter."""
    check_input(packed, ct)
    ev = evaluator or Evaluator(backend, keys, packed.mode)
    layout = packed.layout
    shifted = {0: ct}
    for off in layout.rotated_offsets:
        shifted[off] = ev.rotate(ct, off)
    outputs = []
    for n in range(layout.out_channels):
        acc = None
        for g in layout.filter_groups(n):
            for (_, _, e), poly in zip(layout.group_entries(g), packed.groups[g]):
                prod = ev.multiply(shifted[layout.offset(e)], poly)
                acc = prod if acc is None else ev.add(acc, prod)
        acc = ev.rotate_sum(acc, layout.block, layout.channel_span)
        outputs.append(ev.add(acc, packed.bias[n]))
    return outputs, ev.ledger


def decode_conv_output(packed: PackedLayer, outputs, backend, keys) -> np.ndarray:
    return packed.layout.read_output([backend.decrypt_values(ct, keys) for ct in outputs])
