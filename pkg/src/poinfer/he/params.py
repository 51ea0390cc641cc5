"""CKKS parameter sets and the precomputed ring context."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from sympy import isprime

from ..exceptions import ParameterError
from .ntt import MAX_MODULUS_BITS, SPLIT, small_stage_tables

# Largest total log2(q) for 128-bit classical security with ternary secrets
# (HomomorphicEncryption.org security standard).
HE_STANDARD_MAX_LOGQ = {1024: 27, 2048: 54, 4096: 109, 8192: 218, 16384: 438, 32768: 881}


def find_ntt_primes(bits: int, ring_degree: int, count: int, exclude=(), below: bool = False) -> list[int]:
    """Primes ``q = 1 mod 2n`` closest to ``2**bits``.

    Candidates alternate above and below ``2**bits``; with ``below=True`` only
    primes of exactly ``bits`` bits are returned.
    """
    step = 2 * ring_degree
    center = (1 << bits) // step * step + 1
    if below:
        center -= step
    found: list[int] = []
    offset = 0
    while len(found) < count:
        pair = (center - offset * step,) if below else (center + offset * step, center - offset * step)
        for cand in pair:
            if offset == 0 and found and cand == found[-1]:
                continue
            if cand < 3 or cand.bit_length() > MAX_MODULUS_BITS:
                continue
            if cand in exclude or cand in found:
                continue
            if isprime(cand):
                found.append(cand)
                if len(found) == count:
                    break
        offset += 1
    return found


@dataclass(frozen=True)
class CkksParams:
    """Ring degree, modulus chain and scale for one CKKS instance.

    ``moduli`` lists ``depth + 1`` ciphertext primes (``q_0`` first) followed by the
    special key-switching prime, so ``len(moduli) == depth + 2``.
    """

    ring_degree: int
    moduli: tuple[int, ...]
    scale_bits: int
    sigma: float = 3.2
    check_security: bool = True

    def __post_init__(self):
        n = self.ring_degree
        if n < 2 * SPLIT or n & (n - 1):
            raise ParameterError(f"ring degree must be a power of two >= {2 * SPLIT}, got {n}")
        if len(self.moduli) < 3:
            raise ParameterError("modulus chain needs at least one rescale prime plus q0 and the special prime")
        if len(set(self.moduli)) != len(self.moduli):
            raise ParameterError("modulus chain primes must be distinct")
        for q in self.moduli:
            if q.bit_length() > MAX_MODULUS_BITS:
                raise ParameterError(f"prime {q} exceeds {MAX_MODULUS_BITS} bits")
            if (q - 1) % (2 * n):
                raise ParameterError(f"prime {q} is not 1 mod 2n")
        if self.check_security:
            bound = HE_STANDARD_MAX_LOGQ.get(n)
            if bound is None:
                raise ParameterError(f"no security bound tabulated for ring degree {n}")
            if self.total_modulus_bits > bound:
                raise ParameterError(
                    f"modulus chain of {self.total_modulus_bits} bits exceeds the "
                    f"{bound}-bit bound for 128-bit security at n={n}"
                )

    @classmethod
    def build(
        cls,
        ring_degree: int,
        depth: int,
        scale_bits: int,
        base_bits: int,
        special_bits: int | None = None,
        **kwargs,
    ) -> "CkksParams":
        """Search NTT-friendly primes: ``q_0`` of ``base_bits``, ``depth`` primes near ``2**scale_bits``."""
        if depth < 1:
            raise ParameterError("depth must be >= 1")
        special_bits = base_bits if special_bits is None else special_bits
        mids = find_ntt_primes(scale_bits, ring_degree, depth)
        base = find_ntt_primes(base_bits, ring_degree, 1, exclude=mids, below=True)
        special = find_ntt_primes(special_bits, ring_degree, 1, exclude=mids + base, below=True)
        return cls(ring_degree, tuple(base + mids + special), scale_bits, **kwargs)

    @property
    def depth(self) -> int:
        return len(self.moduli) - 2

    @property
    def slot_count(self) -> int:
        return self.ring_degree // 2

    @property
    def scale(self) -> float:
        return float(2**self.scale_bits)

    @property
    def ciphertext_moduli(self) -> tuple[int, ...]:
        return self.moduli[:-1]

    @property
    def special_modulus(self) -> int:
        return self.moduli[-1]

    @property
    def total_modulus_bits(self) -> int:
        return sum(q.bit_length() for q in self.moduli)


# Parameter presets mirroring the three benchmark columns (n, depth), plus the
# desk default used for correctness checks at scale 2**40.
PRESETS = {
    "n4096-d2": dict(ring_degree=4096, depth=2, scale_bits=25, base_bits=30, special_bits=28),
    "n8192-d4": dict(ring_degree=8192, depth=4, scale_bits=30, base_bits=40, special_bits=40),
    "n16384-d8": dict(ring_degree=16384, depth=8, scale_bits=40, base_bits=49, special_bits=49),
    "n8192-d2": dict(ring_degree=8192, depth=2, scale_bits=40, base_bits=49, special_bits=49),
}


def preset(name: str) -> CkksParams:
    try:
        spec = PRESETS[name]
    except KeyError:
        raise ParameterError(f"unknown parameter preset {name!r}; choose from {sorted(PRESETS)}") from None
    return CkksParams.build(**spec)


def _bit_reverse(values: np.ndarray) -> np.ndarray:
    n = len(values)
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return values[rev]


def _primitive_2n_root(q: int, n: int) -> int:
    exponent = (q - 1) // (2 * n)
    for x in range(2, q):
        g = pow(x, exponent, q)
        if pow(g, n, q) == q - 1:
            return g
    raise ParameterError(f"no primitive 2n-th root modulo {q}")


@dataclass(eq=False)
class RingContext:
    """NTT tables and CRT constants for every prime of a parameter set."""

    params: CkksParams
    moduli: np.ndarray = field(init=False)
    qinv: np.ndarray = field(init=False)
    psi_rev: np.ndarray = field(init=False)
    psi_inv_rev: np.ndarray = field(init=False)
    n_inv: np.ndarray = field(init=False)
    psi_rev_q: np.ndarray = field(init=False)
    psi_inv_rev_q: np.ndarray = field(init=False)
    small: np.ndarray = field(init=False)
    small_q: np.ndarray = field(init=False)
    small_inv: np.ndarray = field(init=False)
    small_inv_q: np.ndarray = field(init=False)

    def __post_init__(self):
        n = self.params.ring_degree
        primes = self.params.moduli
        self.moduli = np.array(primes, dtype=np.uint64)
        self.qinv = np.array([1.0 / q for q in primes], dtype=np.float64)
        psi_rev = np.empty((len(primes), n), dtype=np.uint64)
        psi_inv_rev = np.empty((len(primes), n), dtype=np.uint64)
        for i, q in enumerate(primes):
            psi = _primitive_2n_root(q, n)
            psi_inv = pow(psi, -1, q)
            powers = np.array([pow(psi, e, q) for e in range(n)], dtype=np.uint64)
            inv_powers = np.array([pow(psi_inv, e, q) for e in range(n)], dtype=np.uint64)
            psi_rev[i] = _bit_reverse(powers)
            psi_inv_rev[i] = _bit_reverse(inv_powers)
        self.psi_rev = psi_rev
        self.psi_inv_rev = psi_inv_rev
        self.n_inv = np.array([pow(n, -1, q) for q in primes], dtype=np.uint64)
        qf = np.array(primes, dtype=np.float64)[:, None]
        self.psi_rev_q = psi_rev.astype(np.float64) / qf
        self.psi_inv_rev_q = psi_inv_rev.astype(np.float64) / qf
        fwd = [small_stage_tables(psi_rev[i], q) for i, q in enumerate(primes)]
        inv = [small_stage_tables(psi_inv_rev[i], q) for i, q in enumerate(primes)]
        self.small = np.stack([t[0] for t in fwd])
        self.small_q = np.stack([t[1] for t in fwd])
        self.small_inv = np.stack([t[0] for t in inv])
        self.small_inv_q = np.stack([t[1] for t in inv])

    def rows(self, level: int, special: bool = False) -> np.ndarray:
        """Prime indices active at ``level`` (``q_0..q_level``), optionally with the special prime."""
        idx = list(range(level + 1))
        if special:
            idx.append(len(self.params.moduli) - 1)
        return np.array(idx, dtype=np.int64)

    @cached_property
    def ntt_order(self) -> np.ndarray:
        """Odd exponent ``e`` such that NTT slot ``k`` evaluates at ``psi**e``."""
        n = self.params.ring_degree
        return _bit_reverse(np.arange(n, dtype=np.int64)) * 2 + 1

    @lru_cache(maxsize=None)
    def galois_permutation(self, galois: int) -> np.ndarray:
        """Index map realising ``X -> X**galois`` directly on NTT-domain vectors."""
        n = self.params.ring_degree
        order = self.ntt_order
        position = np.empty(2 * n, dtype=np.int64)
        position[order] = np.arange(n)
        return position[(order * galois) % (2 * n)]
