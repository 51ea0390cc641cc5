"""Fully connected layer packing: naive, diagonal and hybrid layouts."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..exceptions import HEError, ShapeError
from ..he.evaluator import Evaluator
from .groups import FC_KINDS, group_count
from .packed import PackedLayer, check_input, encode_payload, next_pow2, plan_sets, product_position


@dataclass(frozen=True)
class FcLayout:
    """Slot geometry for ``y = W^T x + b`` with ``W`` of shape ``(inputs, outputs)``.

    naive: input in slots ``[0, inputs)``; one product per output followed by a
        rotate-and-sum over a power-of-two window; ``y[n]`` lands in slot 0 of
        output ciphertext ``n``.
    hybrid: the input is replicated in every window-sized block and up to
        ``rows_per_ct`` rows share one output ciphertext; ``y[n]`` lands at the
        start of block ``n % rows_per_ct``.
    diagonal: generalized diagonals against a periodically extended input,
        evaluated baby-step giant-step; ``y`` occupies slots ``[0, outputs)``.
    """

    kind: str
    inputs: int
    outputs: int
    slots: int

    def __post_init__(self):
        if self.kind not in FC_KINDS:
            raise ShapeError(f"unknown FC packing {self.kind!r}; expected one of {FC_KINDS}")
        if self.inputs < 1 or self.outputs < 1:
            raise ShapeError(f"FC dims must be positive, got {self.inputs}x{self.outputs}")
        need = self.inputs + self.outputs - 1 if self.kind == "diagonal" else self.window
        if need > self.slots:
            raise HEError(f"{self.kind} FC({self.inputs},{self.outputs}) needs {need} slots, only {self.slots} available")

    @property
    def window(self) -> int:
        return next_pow2(self.inputs)

    @property
    def rows_per_ct(self) -> int:
        return self.slots // self.window if self.kind == "hybrid" else 1

    @property
    def baby(self) -> int:
        return math.ceil(math.sqrt(self.inputs))

    @property
    def giant(self) -> int:
        return math.ceil(self.inputs / self.baby)

    @property
    def group_count(self) -> int:
        return group_count((self.inputs, self.outputs), self.kind)

    @property
    def output_count(self) -> int:
        if self.kind == "diagonal":
            return 1
        return math.ceil(self.outputs / self.rows_per_ct)

    def rotation_steps(self) -> list[int]:
        if self.kind == "diagonal":
            return list(range(1, self.baby)) + [g * self.baby for g in range(1, self.giant)]
        return [1 << t for t in range(int(math.log2(self.window)))]

    def input_vector(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size != self.inputs:
            raise ShapeError(f"expected {self.inputs} inputs, got {x.size}")
        v = np.zeros(self.slots)
        if self.kind == "naive":
            v[: self.inputs] = x
        elif self.kind == "hybrid":
            for r in range(self.rows_per_ct):
                v[r * self.window : r * self.window + self.inputs] = x
        else:
            span = self.inputs + self.outputs - 1
            v[:span] = x[np.arange(span) % self.inputs]
        return v

    def group_vectors(self, W: np.ndarray, g: int) -> list[np.ndarray]:
        v = np.zeros(self.slots)
        if self.kind == "diagonal":
            cols = np.arange(self.outputs)
            diag = W[(cols + g) % self.inputs, cols]
            shift = (g // self.baby) * self.baby
            v[: self.outputs] = diag
            return [np.roll(v, shift)]
        start = (g % self.rows_per_ct) * self.window
        v[start : start + self.inputs] = W[:, g]
        return [v]

    def bias_vectors(self, b: np.ndarray) -> list[np.ndarray]:
        out = []
        if self.kind == "diagonal":
            v = np.zeros(self.slots)
            v[: self.outputs] = b
            return [v]
        for k in range(self.output_count):
            v = np.zeros(self.slots)
            for n in range(k * self.rows_per_ct, min((k + 1) * self.rows_per_ct, self.outputs)):
                v[(n % self.rows_per_ct) * self.window] = b[n]
            out.append(v)
        return out

    def read_output(self, decoded: list[np.ndarray]) -> np.ndarray:
        if self.kind == "diagonal":
            return np.asarray(decoded[0][: self.outputs])
        R = self.rows_per_ct
        return np.array([decoded[n // R][(n % R) * self.window] for n in range(self.outputs)])


def pack_fc(W, b, kind: str, plan, backend, keys, mode: str = "relin-only", name: str = "fc",
            input_level: int | None = None, input_scale: float | None = None) -> PackedLayer:
    """Encode ``W`` (inputs x outputs) and ``b`` with hidden groups encrypted per ``plan``."""
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).ravel()
    if W.ndim != 2 or b.size != W.shape[1]:
        raise ShapeError(f"FC weights {W.shape} and bias {b.shape} do not match")
    layout = FcLayout(kind, W.shape[0], W.shape[1], backend.params.slot_count)
    hidden, bias_hidden = plan_sets(plan, kind, layout.group_count)
    level = backend.params.depth if input_level is None else input_level
    scale = backend.params.scale if input_scale is None else input_scale
    groups = [
        encode_payload(layout.group_vectors(W, g), g in hidden, backend, keys, level, backend.params.scale)
        for g in range(layout.group_count)
    ]
    out_level, out_scale = product_position(backend, mode, level, scale)
    bias = encode_payload(layout.bias_vectors(b), bias_hidden, backend, keys, out_level, out_scale)
    dims = {"inputs": layout.inputs, "outputs": layout.outputs}
    return PackedLayer(name, kind, layout, groups, hidden, bias, bias_hidden, mode, level, scale, dims)


def encrypt_fc_input(packed: PackedLayer, x, backend, keys):
    return backend.encrypt(backend.encode(packed.layout.input_vector(x), packed.input_level, packed.input_scale), keys)


def eval_fc_he(packed: PackedLayer, ct, backend, keys, evaluator: Evaluator | None = None):
    """Homomorphic ``W^T x + b``; returns the output ciphertexts and the op ledger."""
    check_input(packed, ct)
    ev = evaluator or Evaluator(backend, keys, packed.mode)
    layout = packed.layout
    if layout.kind == "diagonal":
        outputs = [_eval_diagonal(packed, ct, ev)]
    else:
        outputs = []
        R = layout.rows_per_ct
        for k in range(layout.output_count):
            acc = None
            for n in range(k * R, min((k + 1) * R, layout.outputs)):
                prod = ev.multiply(ct, packed.groups[n][0])
                acc = prod if acc is None else ev.add(acc, prod)
            acc = ev.rotate_sum(acc, 1, layout.window)
            outputs.append(ev.add(acc, packed.bias[k]))
    return outputs, ev.ledger


def _eval_diagonal(packed: PackedLayer, ct, ev: Evaluator):
    layout = packed.layout
    B = layout.baby
    babies = [ct] + [ev.rotate(ct, b) for b in range(1, B)]
    total = None
    for g in range(layout.giant):
        inner = None
        for b in range(B):
            i = g * B + b
            if i >= layout.inputs:
                break
            prod = ev.multiply(babies[b], packed.groups[i][0])
            inner = prod if inner is None else ev.add(inner, prod)
        inner = ev.rotate(inner, g * B)
        total = inner if total is None else ev.add(total, inner)
    return ev.add(total, packed.bias[0])


def decode_fc_output(packed: PackedLayer, outputs, backend, keys) -> np.ndarray:
    return packed.layout.read_output([backend.decrypt_values(ct, keys) for ct in outputs])
