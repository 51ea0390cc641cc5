"""Exact RNS-CKKS backend.

Polynomials live in the NTT domain as ``uint64`` arrays of shape
``(level + 1, n)``. Key switching uses a per-prime digit decomposition with a
single special prime. A ciphertext at ``level`` uses primes ``q_0..q_level``;
rescaling drops the last of them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..exceptions import HEError, MissingKeyError, NoiseBudgetExhausted
from . import ntt as K
from .params import CkksParams, RingContext


class CanonicalEmbedding:
    """Real slot vectors <-> real polynomial coefficients via the CKKS embedding."""

    def __init__(self, ring_degree: int):
        n = ring_degree
        self.n = n
        self.slots = n // 2
        gen = np.empty(self.slots, dtype=np.int64)
        acc = 1
        for j in range(self.slots):
            gen[j] = acc
            acc = acc * 5 % (2 * n)
        self.pos = (gen - 1) // 2
        self.conj_pos = (2 * n - gen - 1) // 2
        self.twist = np.exp(1j * np.pi * np.arange(n) / n)

    def to_coefficients(self, values) -> np.ndarray:
        z = np.zeros(self.slots, dtype=np.complex128)
        values = np.asarray(values, dtype=np.float64).ravel()
        z[: values.size] = values
        v = np.empty(self.n, dtype=np.complex128)
        v[self.pos] = z
        v[self.conj_pos] = np.conj(z)
        return (np.fft.fft(v) / self.n * np.conj(self.twist)).real

    def to_slots(self, coeffs) -> np.ndarray:
        v = self.n * np.fft.ifft(np.asarray(coeffs, dtype=np.float64) * self.twist)
        return v[self.pos].real


@dataclass(frozen=True, eq=False)
class Plaintext:
    data: np.ndarray
    level: int
    scale: float
    max_coeff: float = 0.0

    @property
    def is_encrypted(self) -> bool:
        return False


@dataclass(frozen=True, eq=False)
class Ciphertext:
    polys: tuple
    level: int
    scale: float
    noise_estimate: float = 0.0

    @property
    def size(self) -> int:
        return len(self.polys)

    @property
    def is_encrypted(self) -> bool:
        return True


@dataclass(frozen=True, eq=False)
class KeySet:
    params: CkksParams
    seed: int
    secret: np.ndarray
    public: tuple
    relin: tuple
    rotation: dict = field(default_factory=dict)

    @property
    def rotation_steps(self) -> frozenset:
        return frozenset(self.rotation)


def _log2(x: float) -> float:
    return math.log2(x) if x > 0 else float("-inf")


class CKKSBackend:
    """Arithmetic CKKS with measured noise.

    ``seed`` drives encryption randomness; key generation takes its own seed so
    the same keys can be regenerated independently of how many ciphertexts were
    produced.
    """

    exact = True

    def __init__(self, params: CkksParams, seed: int = 0):
        self.params = params
        self.ctx = RingContext(params)
        self.embedding = CanonicalEmbedding(params.ring_degree)
        self.rng = np.random.default_rng(seed)
        n = params.ring_degree
        h = 2 * n / 3
        sigma = params.sigma
        self._fresh_noise_bits = _log2(8 * math.sqrt(2) * sigma * n + 6 * sigma * math.sqrt(n) + 16 * sigma * math.sqrt(h * n))
        self._rescale_noise = math.sqrt(n / 3) * (3 + 8 * math.sqrt(h))
        self._keyswitch_noise = 8 * sigma * n / math.sqrt(3) * (params.depth + 1)

    # ------------------------------------------------------------------ tables
    @lru_cache(maxsize=None)
    def _tables(self, rows: tuple) -> tuple:
        idx = np.array(rows, dtype=np.int64)
        c = self.ctx
        return (
            np.ascontiguousarray(c.moduli[idx]),
            np.ascontiguousarray(c.qinv[idx]),
            (c.psi_rev[idx], c.psi_rev_q[idx], c.small[idx], c.small_q[idx]),
            (c.psi_inv_rev[idx], c.psi_inv_rev_q[idx], c.small_inv[idx], c.small_inv_q[idx]),
            np.ascontiguousarray(c.n_inv[idx]),
        )

    def _rows(self, level: int, special: bool = False) -> tuple:
        rows = tuple(range(level + 1))
        return rows + (len(self.params.moduli) - 1,) if special else rows

    def _ntt(self, a, rows):
        m, _, fwd, _, _ = self._tables(rows)
        K.ntt_rows(a, m, *fwd)
        return a

    def _intt(self, a, rows):
        m, qi, _, inv, ninv = self._tables(rows)
        K.intt_rows(a, m, qi, *inv, ninv)
        return a

    @lru_cache(maxsize=None)
    def _inverse_of(self, prime_index: int, rows: tuple) -> np.ndarray:
        p = self.params.moduli[prime_index]
        return np.array([pow(p, -1, self.params.moduli[i]) for i in rows], dtype=np.uint64)

    @lru_cache(maxsize=None)
    def _crt(self, level: int):
        primes = self.params.moduli[: level + 1]
        big_q = math.prod(primes)
        terms = []
        for q in primes:
            m = big_q // q
            terms.append((q, pow(m % q, -1, q), m))
        return big_q, terms

    # ---------------------------------------------------------------- sampling
    def _small_to_ntt(self, values: np.ndarray, rows: tuple) -> np.ndarray:
        m = self._tables(rows)[0]
        return self._ntt(K.reduce_signed(values.astype(np.int64), m), rows)

    def _ternary(self, rng) -> np.ndarray:
        return rng.integers(-1, 2, size=self.params.ring_degree)

    def _gaussian(self, rng) -> np.ndarray:
        sigma = self.params.sigma
        e = np.rint(rng.normal(0.0, sigma, size=self.params.ring_degree))
        return np.clip(e, -6 * sigma, 6 * sigma)

    def _uniform(self, rng, rows: tuple) -> np.ndarray:
        out = np.empty((len(rows), self.params.ring_degree), dtype=np.uint64)
        for r, i in enumerate(rows):
            out[r] = rng.integers(0, self.params.moduli[i], size=self.params.ring_degree, dtype=np.uint64)
        return out

    # ------------------------------------------------------------------ keygen
    def keygen(self, seed: int = 0, rotation_steps=()) -> KeySet:
        rng = np.random.default_rng(seed)
        top = self.params.depth
        all_rows = self._rows(top, special=True)
        s = self._small_to_ntt(self._ternary(rng), all_rows)
        ct_rows = self._rows(top)
        m = self._tables(ct_rows)[0]
        a = self._uniform(rng, ct_rows)
        e = self._small_to_ntt(self._gaussian(rng), ct_rows)
        b = K.sub_rows(e, K.mul_rows(a, s[:-1], m, self._tables(ct_rows)[1]), m)
        s_sq = K.mul_rows(s, s, *self._tables(all_rows)[:2])
        relin = self._switching_key(rng, s, s_sq)
        keys = KeySet(self.params, seed, s, (b, a), relin, {})
        return self.with_rotation_keys(keys, rotation_steps, rng=rng)

    def with_rotation_keys(self, keys: KeySet, steps, rng=None) -> KeySet:
        """Return a key set that additionally covers ``steps`` (existing keys are shared)."""
        slots = self.params.slot_count
        wanted = {int(s) % slots for s in steps} - {0} - set(keys.rotation)
        if not wanted:
            return keys
        if rng is None:
            rng = np.random.default_rng([keys.seed, len(keys.rotation), *sorted(wanted)])
        rotation = dict(keys.rotation)
        n2 = 2 * self.params.ring_degree
        for step in sorted(wanted):
            g = pow(5, step, n2)
            perm = self.ctx.galois_permutation(g)
            rotation[step] = self._switching_key(rng, keys.secret, keys.secret[:, perm])
        return KeySet(keys.params, keys.seed, keys.secret, keys.public, keys.relin, rotation)

    def _switching_key(self, rng, s, target) -> tuple:
        """Key switching from ``target`` to ``s``.

        Returns stacked ``(B, A)`` arrays of shape ``(digits, primes, n)`` with
        one digit per ciphertext prime; row ``i`` of a digit is modulo context
        prime ``i`` (special prime last).
        """
        top = self.params.depth
        rows = self._rows(top, special=True)
        m, qi = self._tables(rows)[:2]
        special = self.params.special_modulus
        shape = (top + 1, len(rows), self.params.ring_degree)
        key_b = np.empty(shape, dtype=np.uint64)
        key_a = np.empty(shape, dtype=np.uint64)
        for j in range(top + 1):
            a = self._uniform(rng, rows)
            e = self._small_to_ntt(self._gaussian(rng), rows)
            b = K.sub_rows(e, K.mul_rows(a, s, m, qi), m)
            qj = self.params.moduli[j]
            factor = np.uint64(special % qj)
            extra = K.scalar_mul_rows(target[j : j + 1], np.array([factor], dtype=np.uint64), m[j : j + 1], qi[j : j + 1])
            b[j] = K.add_rows(b[j : j + 1], extra, m[j : j + 1])[0]
            key_b[j] = b
            key_a[j] = a
        return key_b, key_a

    # ---------------------------------------------------------------- encoding
    def encode(self, values, level: int | None = None, scale: float | None = None) -> Plaintext:
        level = self.params.depth if level is None else level
        scale = self.params.scale if scale is None else float(scale)
        values = np.asarray(values, dtype=np.float64).ravel()
        if values.size > self.params.slot_count:
            raise HEError(f"{values.size} values exceed the {self.params.slot_count} available slots")
        if not np.all(np.isfinite(values)):
            raise HEError("cannot encode non-finite values")
        if not np.any(values):
            rows = self._rows(level)
            return Plaintext(np.zeros((len(rows), self.params.ring_degree), dtype=np.uint64), level, scale, 0.0)
        coeffs = np.rint(self.embedding.to_coefficients(values) * scale)
        return self._plaintext_from_coeffs(coeffs, level, scale)

    def _plaintext_from_coeffs(self, coeffs: np.ndarray, level: int, scale: float) -> Plaintext:
        rows = self._rows(level)
        big_q = self._crt(level)[0]
        peak = float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
        if peak >= big_q / 2:
            raise HEError(f"encoded coefficients ({peak:.3g}) overflow the level-{level} modulus")
        m = self._tables(rows)[0]
        if peak < 2**62:
            data = K.reduce_signed(coeffs.astype(np.int64), m)
        else:
            big = [int(c) for c in coeffs]
            data = np.array([[c % self.params.moduli[i] for c in big] for i in rows], dtype=np.uint64)
        return Plaintext(self._ntt(data, rows), level, scale, peak)

    def decode(self, pt: Plaintext, count: int | None = None) -> np.ndarray:
        coeffs = self._reconstruct(pt.data, pt.level)
        slots = self.embedding.to_slots(coeffs.astype(np.float64) / pt.scale)
        return slots if count is None else slots[:count]

    def _reconstruct(self, data_ntt: np.ndarray, level: int) -> np.ndarray:
        """Centered integer coefficients (object array) from NTT residues."""
        rows = self._rows(level)
        coef = self._intt(data_ntt.copy(), rows)
        big_q, terms = self._crt(level)
        total = np.zeros(self.params.ring_degree, dtype=object)
        for r, (q, inv, m) in enumerate(terms):
            part = (coef[r].astype(object) * inv) % q
            total = total + part * m
        total = total % big_q
        half = big_q // 2
        return np.where(total > half, total - big_q, total)

    # -------------------------------------------------------------- encryption
    def encrypt(self, pt: Plaintext, keys: KeySet) -> Ciphertext:
        rows = self._rows(pt.level)
        m, qi = self._tables(rows)[:2]
        k = len(rows)
        u = self._small_to_ntt(self._ternary(self.rng), rows)
        e0 = self._small_to_ntt(self._gaussian(self.rng), rows)
        e1 = self._small_to_ntt(self._gaussian(self.rng), rows)
        b, a = keys.public
        c0 = K.add_rows(K.add_rows(K.mul_rows(b[:k], u, m, qi), e0, m), pt.data, m)
        c1 = K.add_rows(K.mul_rows(a[:k], u, m, qi), e1, m)
        return Ciphertext((c0, c1), pt.level, pt.scale, self._fresh_noise_bits)

    def encrypt_values(self, values, keys: KeySet, level=None, scale=None) -> Ciphertext:
        return self.encrypt(self.encode(values, level, scale), keys)

    def _decrypt_poly(self, ct: Ciphertext, keys: KeySet) -> np.ndarray:
        rows = self._rows(ct.level)
        m, qi = self._tables(rows)[:2]
        s = np.ascontiguousarray(keys.secret[: len(rows)])
        acc = ct.polys[0].copy()
        power = s
        for poly in ct.polys[1:]:
            K.muladd_rows(acc, poly, power, m, qi)
            power = K.mul_rows(power, s, m, qi)
        return acc

    def decrypt(self, ct: Ciphertext, keys: KeySet) -> Plaintext:
        return Plaintext(self._decrypt_poly(ct, keys), ct.level, ct.scale)

    def decrypt_values(self, ct: Ciphertext, keys: KeySet, count: int | None = None) -> np.ndarray:
        return self.decode(self.decrypt(ct, keys), count)

    # ---------------------------------------------------------------- checks
    @staticmethod
    def _same_level(a, b, what: str):
        if a.level != b.level:
            raise HEError(f"{what}: level mismatch ({a.level} vs {b.level})")

    @staticmethod
    def _same_scale(a, b, what: str):
        if not math.isclose(a.scale, b.scale, rel_tol=1e-9):
            raise HEError(f"{what}: scale mismatch ({a.scale:.6g} vs {b.scale:.6g})")

    # -------------------------------------------------------------- evaluation
    def add_pt(self, ct: Ciphertext, pt: Plaintext) -> Ciphertext:
        self._same_level(ct, pt, "add_pt")
        self._same_scale(ct, pt, "add_pt")
        m = self._tables(self._rows(ct.level))[0]
        polys = (K.add_rows(ct.polys[0], pt.data, m),) + ct.polys[1:]
        return Ciphertext(polys, ct.level, ct.scale, ct.noise_estimate)

    def add_ct(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        self._same_level(a, b, "add_ct")
        self._same_scale(a, b, "add_ct")
        if a.size != b.size:
            raise HEError(f"add_ct: ciphertext sizes differ ({a.size} vs {b.size})")
        m = self._tables(self._rows(a.level))[0]
        polys = tuple(K.add_rows(x, y, m) for x, y in zip(a.polys, b.polys))
        noise = _log2(2**a.noise_estimate + 2**b.noise_estimate)
        return Ciphertext(polys, a.level, a.scale, noise)

    def mul_pt(self, ct: Ciphertext, pt: Plaintext) -> Ciphertext:
        self._same_level(ct, pt, "mul_pt")
        if ct.size != 2:
            raise HEError("mul_pt expects a relinearized (size 2) ciphertext")
        m, qi = self._tables(self._rows(ct.level))[:2]
        polys = tuple(K.mul_rows(p, pt.data, m, qi) for p in ct.polys)
        noise = ct.noise_estimate + _log2(max(pt.max_coeff, 1.0))
        return Ciphertext(polys, ct.level, ct.scale * pt.scale, noise)

    def mul_ct(self, a: Ciphertext, b: Ciphertext) -> Ciphertext:
        self._same_level(a, b, "mul_ct")
        if a.size != 2 or b.size != 2:
            raise HEError("mul_ct expects two size-2 ciphertexts")
        m, qi = self._tables(self._rows(a.level))[:2]
        a0, a1 = a.polys
        b0, b1 = b.polys
        d0 = K.mul_rows(a0, b0, m, qi)
        d1 = K.mul_rows(a0, b1, m, qi)
        K.muladd_rows(d1, a1, b0, m, qi)
        d2 = K.mul_rows(a1, b1, m, qi)
        noise = a.noise_estimate + b.noise_estimate
        return Ciphertext((d0, d1, d2), a.level, a.scale * b.scale, noise)

    def relinearize(self, ct: Ciphertext, keys: KeySet) -> Ciphertext:
        if ct.size != 3:
            raise HEError(f"relinearize expects a size-3 ciphertext, got size {ct.size}")
        if not keys.relin:
            raise MissingKeyError("no relinearization key")
        rows = self._rows(ct.level)
        m = self._tables(rows)[0]
        coef = self._intt(ct.polys[2].copy(), rows)
        k0, k1 = self._keyswitch(coef, ct.level, keys.relin, ct.polys[2])
        polys = (K.add_rows(ct.polys[0], k0, m), K.add_rows(ct.polys[1], k1, m))
        return Ciphertext(polys, ct.level, ct.scale, _log2(2**ct.noise_estimate + self._keyswitch_noise))

    def rescale(self, ct: Ciphertext) -> Ciphertext:
        if ct.level == 0:
            raise NoiseBudgetExhausted("rescale at level 0: modulus chain exhausted")
        level = ct.level
        q_last = self.params.moduli[level]
        rows = self._rows(level - 1)
        polys = tuple(self._divide_last(p, level, level) for p in ct.polys)
        noise = _log2(2**ct.noise_estimate / q_last + self._rescale_noise)
        return Ciphertext(polys, level - 1, ct.scale / q_last, noise)

    @lru_cache(maxsize=None)
    def _row_primes(self, level: int, prime_index: int) -> tuple:
        rows = self._rows(level - 1)
        return np.array(rows + (prime_index,), dtype=np.int64), self._inverse_of(prime_index, rows)

    def _divide_last(self, poly: np.ndarray, level: int, prime_index: int) -> np.ndarray:
        """Divide-and-round by the prime held in the last row of ``poly``."""
        c = self.ctx
        primes, last_inv = self._row_primes(level, prime_index)
        return K.divide_last(
            poly, primes, c.moduli, c.qinv,
            c.psi_rev, c.psi_rev_q, c.small, c.small_q,
            c.psi_inv_rev, c.psi_inv_rev_q, c.small_inv, c.small_inv_q,
            c.n_inv, last_inv,
        )

    @lru_cache(maxsize=None)
    def _digit_layout(self, level: int) -> tuple:
        """Context prime of each extended row, and where each digit's own prime sits."""
        ext = self._rows(level, special=True)
        return np.array(ext, dtype=np.int64), np.arange(level + 1, dtype=np.int64)

    def _keyswitch(self, coef: np.ndarray, level: int, key: tuple, ntt_input: np.ndarray) -> tuple:
        """Switch a polynomial under the key's source secret.

        ``coef`` and ``ntt_input`` are the same polynomial in coefficient and NTT form.
        """
        c = self.ctx
        primes, src_pos = self._digit_layout(level)
        acc0, acc1 = K.keyswitch(
            coef, ntt_input, key[0], key[1], primes, src_pos,
            c.moduli, c.qinv, c.psi_rev, c.psi_rev_q, c.small, c.small_q,
        )
        special = len(self.params.moduli) - 1
        return self._divide_last(acc0, level + 1, special), self._divide_last(acc1, level + 1, special)

    def rotate(self, ct: Ciphertext, steps: int, keys: KeySet) -> Ciphertext:
        """Cyclic left rotation: slot ``j`` receives slot ``j + steps``."""
        steps = int(steps) % self.params.slot_count
        if steps == 0:
            return ct
        if ct.size != 2:
            raise HEError("rotate expects a size-2 ciphertext")
        key = keys.rotation.get(steps)
        if key is None:
            raise MissingKeyError(f"no rotation key for step {steps}")
        perm = self.ctx.galois_permutation(pow(5, steps, 2 * self.params.ring_degree))
        rows = self._rows(ct.level)
        m = self._tables(rows)[0]
        c0 = np.ascontiguousarray(ct.polys[0][:, perm])
        c1 = np.ascontiguousarray(ct.polys[1][:, perm])
        k0, k1 = self._keyswitch(self._intt(c1.copy(), rows), ct.level, key, c1)
        polys = (K.add_rows(c0, k0, m), k1)
        return Ciphertext(polys, ct.level, ct.scale, _log2(2**ct.noise_estimate + self._keyswitch_noise))

    # ------------------------------------------------------------------- noise
    def noise_budget(self, ct: Ciphertext, keys: KeySet) -> float:
        """Bits of headroom left before the decrypted polynomial wraps the modulus.

        Computed as ``log2(Q_level / (4 * max|coefficient|))``; a ciphertext with
        no headroom cannot be decrypted reliably.
        """
        coeffs = self._reconstruct(self._decrypt_poly(ct, keys), ct.level)
        peak = max(int(abs(c)) for c in coeffs)
        big_q = self._crt(ct.level)[0]
        budget = math.log2(big_q) - 2 - (math.log2(peak) if peak else 0.0)
        if budget <= 0:
            raise NoiseBudgetExhausted(f"ciphertext at level {ct.level} is undecryptable (budget {budget:.2f} bits)")
        return budget

    def measure_noise(self, ct: Ciphertext, keys: KeySet, expected) -> float:
        """log2 of the largest coefficient error against the exact encoding of ``expected``."""
        coeffs = self._reconstruct(self._decrypt_poly(ct, keys), ct.level)
        reference = self.embedding.to_coefficients(expected) * ct.scale
        err = np.array([float(c) for c in coeffs]) - reference
        return _log2(float(np.max(np.abs(err))))

    def refresh(self, ct: Ciphertext, keys: KeySet) -> Ciphertext:
        """Decrypt and re-encrypt at the top level and default scale.

        Stands in for the interactive non-linear layer, which hands back freshly
        encrypted outputs. Requires the secret key.
        """
        self.noise_budget(ct, keys)
        values = self.decrypt_values(ct, keys)
        return self.encrypt(self.encode(values), keys)
