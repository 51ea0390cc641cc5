"""Relative operation costs and a symbolic backend that only tracks metadata."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import HEError, MissingKeyError, NoiseBudgetExhausted, ParameterError
from .params import CkksParams

# Raw timings per (ring degree, depth): plain mult, ciph mult, rescale, relinearization.
PUBLISHED_TIMINGS = {
    (4096, 2): (1.0, 2.7, 7.6, 16.1),
    (8192, 4): (4.0, 12.3, 38.5, 80.0),
    (16384, 8): (16.0, 60.0, 175.7, 477.0),
}

UNIT_FIELDS = {
    "plain_mults": "plain_mult",
    "ciph_mults": "ciph_mult",
    "rescales": "rescale",
    "relins": "relinearization",
}


@dataclass(frozen=True)
class CostTable:
    """Unit costs relative to one plaintext-ciphertext multiplication."""

    ciph_mult: float
    rescale: float
    relinearization: float
    plain_mult: float = 1.0
    provenance: str = "custom"

    def __post_init__(self):
        if self.plain_mult != 1.0:
            raise ParameterError(f"plain_mult must be 1 by construction, got {self.plain_mult}")
        for name in ("ciph_mult", "rescale", "relinearization"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ParameterError(f"{name} must be positive and finite, got {value}")

    @classmethod
    def from_raw(cls, plain, ciph, rescale, relin, provenance="custom") -> "CostTable":
        return cls(ciph / plain, rescale / plain, relin / plain, 1.0, provenance)

    @classmethod
    def published(cls, ring_degree: int = 4096, depth: int = 2) -> "CostTable":
        try:
            raw = PUBLISHED_TIMINGS[(ring_degree, depth)]
        except KeyError:
            raise ParameterError(f"no published costs for ring degree {ring_degree}, depth {depth}") from None
        return cls.from_raw(*raw, provenance=f"paper-default({ring_degree},{depth})")

    def unit(self, counter: str) -> float:
        name = UNIT_FIELDS.get(counter)
        return 0.0 if name is None else getattr(self, name)

    def as_dict(self) -> dict:
        return {
            "plain_mult": self.plain_mult,
            "ciph_mult": self.ciph_mult,
            "rescale": self.rescale,
            "relinearization": self.relinearization,
            "provenance": self.provenance,
        }


@dataclass(frozen=True, eq=False)
class SymbolicPlaintext:
    level: int
    scale: float
    slots_used: int = 0

    @property
    def is_encrypted(self) -> bool:
        return False


@dataclass(frozen=True, eq=False)
class SymbolicCiphertext:
    level: int
    scale: float
    size: int = 2
    noise_estimate: float = 0.0

    @property
    def is_encrypted(self) -> bool:
        return True


@dataclass(frozen=True, eq=False)
class SymbolicKeySet:
    params: CkksParams
    seed: int
    rotation: frozenset = field(default_factory=frozenset)
    relin: bool = True

    @property
    def rotation_steps(self) -> frozenset:
        return self.rotation


class CostModelBackend:
    """Same operation contract as the exact backend, with no arithmetic.

    Level, scale and size bookkeeping and every precondition check mirror the
    exact backend, so an evaluation that succeeds here has the same shape there.
    """

    exact = False

    def __init__(self, params: CkksParams, cost_table: CostTable | None = None, seed: int = 0):
        self.params = params
        self.cost_table = cost_table or CostTable.published()

    def keygen(self, seed: int = 0, rotation_steps=()) -> SymbolicKeySet:
        return self.with_rotation_keys(SymbolicKeySet(self.params, seed), rotation_steps)

    def with_rotation_keys(self, keys: SymbolicKeySet, steps, rng=None) -> SymbolicKeySet:
        slots = self.params.slot_count
        wanted = {int(s) % slots for s in steps} - {0}
        return SymbolicKeySet(keys.params, keys.seed, keys.rotation | wanted, keys.relin)

    def encode(self, values, level=None, scale=None) -> SymbolicPlaintext:
        level = self.params.depth if level is None else level
        scale = self.params.scale if scale is None else float(scale)
        size = np.size(values)
        if size > self.params.slot_count:
            raise HEError(f"{size} values exceed the {self.params.slot_count} available slots")
        return SymbolicPlaintext(level, scale, size)

    def encrypt(self, pt: SymbolicPlaintext, keys) -> SymbolicCiphertext:
        return SymbolicCiphertext(pt.level, pt.scale)

    def encrypt_values(self, values, keys, level=None, scale=None) -> SymbolicCiphertext:
        return self.encrypt(self.encode(values, level, scale), keys)

    def decrypt(self, ct, keys):
        raise HEError("the cost-model backend carries no data to decrypt")

    decrypt_values = decrypt

    @staticmethod
    def _check(a, b, what: str, scale: bool = True):
        if a.level != b.level:
            raise HEError(f"{what}: level mismatch ({a.level} vs {b.level})")
        if scale and not math.isclose(a.scale, b.scale, rel_tol=1e-9):
            raise HEError(f"{what}: scale mismatch ({a.scale:.6g} vs {b.scale:.6g})")

    def add_pt(self, ct, pt):
        self._check(ct, pt, "add_pt")
        return ct

    def add_ct(self, a, b):
        self._check(a, b, "add_ct")
        if a.size != b.size:
            raise HEError(f"add_ct: ciphertext sizes differ ({a.size} vs {b.size})")
        return a

    def mul_pt(self, ct, pt):
        self._check(ct, pt, "mul_pt", scale=False)
        if ct.size != 2:
            raise HEError("mul_pt expects a relinearized (size 2) ciphertext")
        return SymbolicCiphertext(ct.level, ct.scale * pt.scale)

    def mul_ct(self, a, b):
        self._check(a, b, "mul_ct", scale=False)
        if a.size != 2 or b.size != 2:
            raise HEError("mul_ct expects two size-2 ciphertexts")
        return SymbolicCiphertext(a.level, a.scale * b.scale, 3)

    def relinearize(self, ct, keys):
        if ct.size != 3:
            raise HEError(f"relinearize expects a size-3 ciphertext, got size {ct.size}")
        if not keys.relin:
            raise MissingKeyError("no relinearization key")
        return SymbolicCiphertext(ct.level, ct.scale)

    def rescale(self, ct):
        if ct.level == 0:
            raise NoiseBudgetExhausted("rescale at level 0: modulus chain exhausted")
        return SymbolicCiphertext(ct.level - 1, ct.scale / self.params.moduli[ct.level], ct.size)

    def rotate(self, ct, steps: int, keys):
        steps = int(steps) % self.params.slot_count
        if steps == 0:
            return ct
        if ct.size != 2:
            raise HEError("rotate expects a size-2 ciphertext")
        if steps not in keys.rotation:
            raise MissingKeyError(f"no rotation key for step {steps}")
        return ct

    def refresh(self, ct, keys):
        return SymbolicCiphertext(self.params.depth, self.params.scale)
