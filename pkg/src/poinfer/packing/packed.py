"""Packed-layer container and helpers shared by the FC and conv packers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..exceptions import HEError, PlanError
from ..he.evaluator import MODES


def next_pow2(x: int) -> int:
    return 1 << max(0, math.ceil(math.log2(x))) if x > 1 else 1


@dataclass(eq=False)
class PackedLayer:
    """Weights of one linear layer encoded for homomorphic evaluation.

    ``groups[g]`` is the list of plaintexts (revealed) or ciphertexts (hidden)
    holding group ``g``; ``bias`` holds one payload per output ciphertext.
    """

    name: str
    scheme: str
    layout: object
    groups: list
    hidden: frozenset
    bias: list
    bias_hidden: bool
    mode: str
    input_level: int
    input_scale: float
    dims: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.layout.kind

    @property
    def group_count(self) -> int:
        return len(self.groups)

    def tags(self) -> list[str]:
        return ["hidden" if g in self.hidden else "revealed" for g in range(len(self.groups))]


def plan_sets(plan, scheme: str, count: int) -> tuple[frozenset, bool]:
    """Hidden group indices and the bias flag from a layer plan, validated."""
    if plan is None:
        return frozenset(), False
    plan_scheme = getattr(plan, "scheme", scheme)
    if plan_scheme != scheme:
        raise PlanError(f"plan uses scheme {plan_scheme!r} but the layer is packed as {scheme!r}")
    hidden = [int(g) for g in plan.hidden]
    if len(set(hidden)) != len(hidden):
        raise PlanError("plan lists a hidden group more than once")
    bad = [g for g in hidden if not 0 <= g < count]
    if bad:
        raise PlanError(f"plan references nonexistent groups {bad[:5]} (layer has {count})")
    return frozenset(hidden), bool(plan.bias_hidden)


def product_position(backend, mode: str, level: int, scale: float) -> tuple[int, float]:
    """Level and scale of a product of an input at (level, scale) with a weight."""
    if mode not in MODES:
        raise HEError(f"unknown evaluation mode {mode!r}")
    params = backend.params
    out = scale * params.scale
    if mode == "rescale-all":
        if level == 0:
            raise HEError("rescale-all mode needs an input above level 0")
        return level - 1, out / params.moduli[level]
    return level, out


def encode_payload(vectors, hide: bool, backend, keys, level: int, scale: float) -> list:
    pts = [backend.encode(v, level, scale) for v in vectors]
    return [backend.encrypt(pt, keys) for pt in pts] if hide else pts


def check_input(packed: PackedLayer, ct) -> None:
    if ct.level != packed.input_level or not math.isclose(ct.scale, packed.input_scale, rel_tol=1e-9):
        raise HEError(
            f"{packed.name}: input at level {ct.level}, scale {ct.scale:.6g}; "
            f"packed for level {packed.input_level}, scale {packed.input_scale:.6g}"
        )
