"""Compiled kernels for RNS polynomial arithmetic.

Every routine works on ``uint64`` arrays shaped ``(k, n)``: one row per prime.
Moduli must stay below 2**50 so that the floating-point quotient estimate in
:func:`_mulmod` is off by at most one.
"""
import numpy as np
from numba import njit

MAX_MODULUS_BITS = 50


SPLIT = 16  # stages with butterfly distance below this run on a transposed copy


@njit(inline="always", cache=True)
def _mulmod(a, b, q, qinv):
    quot = np.uint64(np.float64(a) * np.float64(b) * qinv)
    r = a * b - quot * q
    r = min(r, r + q)
    return min(r, r - q)


@njit(inline="always", cache=True)
def _to_columns(ar, b):
    cols = b.shape[1]
    for c in range(cols):
        for r in range(SPLIT):
            b[r, c] = ar[c * SPLIT + r]


@njit(inline="always", cache=True)
def _from_columns(b, ar):
    cols = b.shape[1]
    for c in range(cols):
        for r in range(SPLIT):
            ar[c * SPLIT + r] = b[r, c]


@njit(inline="always", cache=True)
def _mulmod_lazy(a, w, wq, q):
    """``a * w mod q`` in ``[0, 2q)`` for ``a < 4q``; the quotient estimate is then off by less than one."""
    quot = np.uint64(np.float64(a) * wq)
    r = a * w - quot * q
    return min(r, r + q)


# Butterflies keep values in [0, 4q) (forward) or [0, 2q) (inverse) and only
# fully reduce at the end of a transform.

@njit(inline="always", cache=True)
def _fwd_block_scalar(lo, hi, w, wq, q, q2):
    for j in range(lo.shape[0]):
        u = lo[j]
        u = min(u, u - q2)
        v = _mulmod_lazy(hi[j], w, wq, q)
        lo[j] = u + v
        hi[j] = u + q2 - v


@njit(inline="always", cache=True)
def _inv_block_scalar(lo, hi, w, wq, q, q2):
    for j in range(lo.shape[0]):
        u = lo[j]
        v = hi[j]
        x = u + v
        lo[j] = min(x, x - q2)
        hi[j] = _mulmod_lazy(u + q2 - v, w, wq, q)


@njit(inline="always", cache=True)
def _fwd_block(lo, hi, w, wq, q, q2):
    for j in range(lo.shape[0]):
        u = lo[j]
        u = min(u, u - q2)
        v = _mulmod_lazy(hi[j], w[j], wq[j], q)
        lo[j] = u + v
        hi[j] = u + q2 - v


@njit(inline="always", cache=True)
def _inv_block(lo, hi, w, wq, q, q2):
    for j in range(lo.shape[0]):
        u = lo[j]
        v = hi[j]
        x = u + v
        lo[j] = min(x, x - q2)
        hi[j] = _mulmod_lazy(u + q2 - v, w[j], wq[j], q)


def small_stage_tables(tw: np.ndarray, q: int) -> tuple:
    """Twiddles for the short-distance stages, laid out for the transposed copy.

    Entry ``[s, g, c]`` is the twiddle used by column ``c`` of butterfly group
    ``g`` in the stage with distance ``SPLIT >> (s + 1)``.
    """
    n = tw.shape[0]
    cols = n // SPLIT
    stages = SPLIT.bit_length() - 1
    out = np.zeros((stages, SPLIT // 2, cols), dtype=np.uint64)
    for s in range(stages):
        t = SPLIT >> (s + 1)
        m = n // (2 * t)
        groups = SPLIT // (2 * t)
        for g in range(groups):
            out[s, g] = tw[m + np.arange(cols) * groups + g]
    return out, out.astype(np.float64) / float(q)


@njit(inline="always", cache=True)
def _reduce(x, q, qinv):
    """``x mod q`` for ``x < 2**63`` with ``x / q < 2**50``."""
    quot = np.uint64(np.float64(x) * qinv)
    r = x - quot * q
    r = min(r, r + q)
    return min(r, r - q)


@njit(inline="always", cache=True)
def _reduce_signed(x, q, qinv):
    quot = np.int64(np.floor(np.float64(x) * qinv))
    r = np.uint64(x - quot * np.int64(q))
    r = min(r, r + q)
    return min(r, r - q)


@njit(inline="always", cache=True)
def _ntt_one(ar, q, tw, twq, small, small_q, b):
    n = ar.shape[0]
    q2 = q + q
    t = n
    m = 1
    while m < n and (t >> 1) >= SPLIT:
        t >>= 1
        for i in range(m):
            j1 = 2 * i * t
            _fwd_block_scalar(ar[j1 : j1 + t], ar[j1 + t : j1 + 2 * t], tw[m + i], twq[m + i], q, q2)
        m <<= 1
    _to_columns(ar, b)
    s = 0
    t = SPLIT
    while t > 1:
        t >>= 1
        for g in range(SPLIT // (2 * t)):
            for jj in range(t):
                r = g * 2 * t + jj
                _fwd_block(b[r], b[r + t], small[s, g], small_q[s, g], q, q2)
        s += 1
    _from_columns(b, ar)
    for j in range(n):
        x = ar[j]
        x = min(x, x - q2)
        ar[j] = min(x, x - q)


@njit(inline="always", cache=True)
def _intt_one(ar, q, qinv, tw, twq, small, small_q, ninv, b):
    n = ar.shape[0]
    q2 = q + q
    _to_columns(ar, b)
    t = 1
    s = small.shape[0] - 1
    while t < SPLIT:
        for g in range(SPLIT // (2 * t)):
            for jj in range(t):
                r = g * 2 * t + jj
                _inv_block(b[r], b[r + t], small[s, g], small_q[s, g], q, q2)
        t <<= 1
        s -= 1
    _from_columns(b, ar)
    m = n // t
    while m > 1:
        h = m >> 1
        for i in range(h):
            j1 = 2 * i * t
            _inv_block_scalar(ar[j1 : j1 + t], ar[j1 + t : j1 + 2 * t], tw[h + i], twq[h + i], q, q2)
        t <<= 1
        m = h
    for j in range(n):
        ar[j] = _mulmod(ar[j], ninv, q, qinv)


@njit(cache=True)
def ntt_rows(a, moduli, tw, twq, small, small_q):
    """In-place negacyclic forward NTT of every row (output in bit-reversed order)."""
    k, n = a.shape
    b = np.empty((SPLIT, n // SPLIT), dtype=a.dtype)
    for row in range(k):
        _ntt_one(a[row], moduli[row], tw[row], twq[row], small[row], small_q[row], b)


@njit(cache=True)
def intt_rows(a, moduli, qinv, tw, twq, small, small_q, n_inv):
    """In-place inverse of :func:`ntt_rows`."""
    k, n = a.shape
    b = np.empty((SPLIT, n // SPLIT), dtype=a.dtype)
    for row in range(k):
        _intt_one(a[row], moduli[row], qinv[row], tw[row], twq[row], small[row], small_q[row], n_inv[row], b)


@njit(cache=True)
def keyswitch(coef, ntt_input, key_b, key_a, primes, src_pos, moduli, qinv, tw, twq, small, small_q):
    """Inner products of the lifted digits of ``coef`` with a switching key.

    ``primes`` lists the context prime index of each output row; digit ``j``
    is ``coef[j]`` and already equals ``ntt_input[j]`` modulo prime
    ``primes[src_pos[j]]``. Table arguments are the full per-prime context
    tables. Products are summed lazily and reduced once per row.
    """
    ns, n = coef.shape
    nd = primes.shape[0]
    acc0 = np.zeros((nd, n), dtype=np.uint64)
    acc1 = np.zeros((nd, n), dtype=np.uint64)
    row = np.empty(n, dtype=np.uint64)
    b = np.empty((SPLIT, n // SPLIT), dtype=np.uint64)
    for i in range(nd):
        p = primes[i]
        q = moduli[p]
        qi = qinv[p]
        o0 = acc0[i]
        o1 = acc1[i]
        for j in range(ns):
            if src_pos[j] == i:
                row[:] = ntt_input[j]
            else:
                c = coef[j]
                for t in range(n):
                    row[t] = _reduce(c[t], q, qi)
                _ntt_one(row, q, tw[p], twq[p], small[p], small_q[p], b)
            kb = key_b[j, p]
            ka = key_a[j, p]
            for t in range(n):
                o0[t] += _mulmod(row[t], kb[t], q, qi)
                o1[t] += _mulmod(row[t], ka[t], q, qi)
        for t in range(n):
            o0[t] = _reduce(o0[t], q, qi)
            o1[t] = _reduce(o1[t], q, qi)
    return acc0, acc1


@njit(cache=True)
def divide_last(poly, primes, moduli, qinv, tw, twq, small, small_q, itw, itwq, ismall, ismall_q, n_inv, last_inv):
    """Divide-and-round an NTT-form polynomial by the prime of its last row.

    ``primes`` holds the context prime index of every row of ``poly``;
    ``last_inv[i]`` is the inverse of the dropped prime modulo row ``i``'s prime.
    """
    k1, n = poly.shape
    k = k1 - 1
    b = np.empty((SPLIT, n // SPLIT), dtype=np.uint64)
    pl = primes[k]
    ql = moduli[pl]
    last = poly[k].copy()
    _intt_one(last, ql, qinv[pl], itw[pl], itwq[pl], ismall[pl], ismall_q[pl], n_inv[pl], b)
    half = ql >> np.uint64(1)
    centered = np.empty(n, dtype=np.int64)
    for t in range(n):
        x = last[t]
        centered[t] = -np.int64(ql - x) if x > half else np.int64(x)
    out = np.empty((k, n), dtype=np.uint64)
    row = np.empty(n, dtype=np.uint64)
    for i in range(k):
        p = primes[i]
        q = moduli[p]
        qi = qinv[p]
        for t in range(n):
            row[t] = _reduce_signed(centered[t], q, qi)
        _ntt_one(row, q, tw[p], twq[p], small[p], small_q[p], b)
        s = last_inv[i]
        src = poly[i]
        dst = out[i]
        for t in range(n):
            d = src[t] + q - row[t]
            dst[t] = _mulmod(min(d, d - q), s, q, qi)
    return out


@njit(cache=True)
def mul_rows(a, b, moduli, qinv):
    k, n = a.shape
    out = np.empty_like(a)
    for row in range(k):
        q = moduli[row]
        qi = qinv[row]
        for j in range(n):
            out[row, j] = _mulmod(a[row, j], b[row, j], q, qi)
    return out


@njit(cache=True)
def muladd_rows(acc, a, b, moduli, qinv):
    """``acc += a * b`` in place."""
    k, n = a.shape
    for row in range(k):
        q = moduli[row]
        qi = qinv[row]
        for j in range(n):
            x = acc[row, j] + _mulmod(a[row, j], b[row, j], q, qi)
            if x >= q:
                x -= q
            acc[row, j] = x


@njit(cache=True)
def scalar_mul_rows(a, scalars, moduli, qinv):
    k, n = a.shape
    out = np.empty_like(a)
    for row in range(k):
        q = moduli[row]
        qi = qinv[row]
        s = scalars[row]
        for j in range(n):
            out[row, j] = _mulmod(a[row, j], s, q, qi)
    return out


@njit(cache=True)
def add_rows(a, b, moduli):
    k, n = a.shape
    out = np.empty_like(a)
    for row in range(k):
        q = moduli[row]
        for j in range(n):
            x = a[row, j] + b[row, j]
            if x >= q:
                x -= q
            out[row, j] = x
    return out


@njit(cache=True)
def sub_rows(a, b, moduli):
    k, n = a.shape
    out = np.empty_like(a)
    for row in range(k):
        q = moduli[row]
        for j in range(n):
            x = a[row, j]
            y = b[row, j]
            if x >= y:
                out[row, j] = x - y
            else:
                out[row, j] = x + q - y
    return out


@njit(cache=True)
def reduce_signed(values, moduli):
    """Map signed 64-bit integers of shape ``(n,)`` into every residue ring.

    Exact while ``|value| / q < 2**50``, which holds for moduli of 20+ bits.
    """
    k = moduli.shape[0]
    n = values.shape[0]
    out = np.empty((k, n), dtype=np.uint64)
    for row in range(k):
        q = moduli[row]
        qi = 1.0 / np.float64(q)
        for j in range(n):
            out[row, j] = _reduce_signed(values[j], q, qi)
    return out
