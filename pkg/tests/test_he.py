import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poinfer.exceptions import HEError, MissingKeyError, NoiseBudgetExhausted, ParameterError
from poinfer.he import CKKSBackend, CkksParams, CostModelBackend, CostTable, Evaluator, OpLedger, preset
from poinfer.he import ntt as K
from poinfer.he.params import RingContext

TOL = 1e-2


def negacyclic_product(a, b, q):
    """Schoolbook product in Z_q[x]/(x^n + 1) with Python integers."""
    n = len(a)
    out = [0] * n
    for i in range(n):
        for j in range(n):
            k = i + j
            if k < n:
                out[k] += int(a[i]) * int(b[j])
            else:
                out[k - n] -= int(a[i]) * int(b[j])
    return [x % q for x in out]


def test_ntt_product_matches_schoolbook(tiny_params):
    ctx = RingContext(tiny_params)
    rng = np.random.default_rng(0)
    n = tiny_params.ring_degree
    rows = tuple(range(len(tiny_params.moduli)))
    idx = np.array(rows)
    a = np.stack([rng.integers(0, q, n, dtype=np.uint64) for q in tiny_params.moduli])
    b = np.stack([rng.integers(0, q, n, dtype=np.uint64) for q in tiny_params.moduli])
    fa, fb = a.copy(), b.copy()
    fwd = (ctx.psi_rev[idx], ctx.psi_rev_q[idx], ctx.small[idx], ctx.small_q[idx])
    inv = (ctx.psi_inv_rev[idx], ctx.psi_inv_rev_q[idx], ctx.small_inv[idx], ctx.small_inv_q[idx])
    K.ntt_rows(fa, ctx.moduli, *fwd)
    K.ntt_rows(fb, ctx.moduli, *fwd)
    prod = K.mul_rows(fa, fb, ctx.moduli, ctx.qinv)
    K.intt_rows(prod, ctx.moduli, ctx.qinv, *inv, ctx.n_inv)
    for r, q in enumerate(tiny_params.moduli):
        assert prod[r].tolist() == negacyclic_product(a[r], b[r], q)


def test_ntt_roundtrip(tiny_params):
    ctx = RingContext(tiny_params)
    rng = np.random.default_rng(1)
    n = tiny_params.ring_degree
    a = np.stack([rng.integers(0, q, n, dtype=np.uint64) for q in tiny_params.moduli])
    b = a.copy()
    K.ntt_rows(b, ctx.moduli, ctx.psi_rev, ctx.psi_rev_q, ctx.small, ctx.small_q)
    assert not np.array_equal(a, b)
    K.intt_rows(b, ctx.moduli, ctx.qinv, ctx.psi_inv_rev, ctx.psi_inv_rev_q, ctx.small_inv, ctx.small_inv_q, ctx.n_inv)
    assert np.array_equal(a, b)


@given(st.lists(st.integers(-(2**62), 2**62), min_size=1, max_size=16))
def test_reduce_signed_matches_python_mod(values):
    moduli = np.array([1073479681, 33538049, 1099511480321], dtype=np.uint64)
    out = K.reduce_signed(np.array(values, dtype=np.int64), moduli)
    for r, q in enumerate(moduli.tolist()):
        assert out[r].tolist() == [v % q for v in values]


# ------------------------------------------------------------------ parameters

def test_presets_respect_security_bound():
    for name in ("n4096-d2", "n8192-d4", "n16384-d8", "n8192-d2"):
        p = preset(name)
        assert len(p.moduli) == p.depth + 2
        assert p.slot_count == p.ring_degree // 2
        for q in p.moduli:
            assert (q - 1) % (2 * p.ring_degree) == 0


def test_oversized_chain_is_refused():
    with pytest.raises(ParameterError):
        CkksParams.build(4096, depth=4, scale_bits=30, base_bits=40)


def test_unknown_preset():
    with pytest.raises(ParameterError):
        preset("n3-d1")


def test_keygen_slot_count_at_desk_params(desk):
    backend, keys = desk
    assert backend.params.slot_count == 4096
    assert backend.params.scale == 2.0**40


def test_keygen_is_deterministic(tiny_params):
    a = CKKSBackend(tiny_params).keygen(seed=3, rotation_steps=(1,))
    b = CKKSBackend(tiny_params).keygen(seed=3, rotation_steps=(1,))
    assert np.array_equal(a.secret, b.secret)
    assert all(np.array_equal(x, y) for x, y in zip(a.public, b.public))
    assert all(np.array_equal(x, y) for x, y in zip(a.relin, b.relin))
    assert all(np.array_equal(x, y) for x, y in zip(a.rotation[1], b.rotation[1]))


def test_ciphertexts_are_reproducible_per_seed(tiny_params):
    outs = []
    for _ in range(2):
        be = CKKSBackend(tiny_params, seed=9)
        keys = be.keygen(seed=1)
        outs.append(be.encrypt_values([1.0, 2.0], keys))
    assert all(np.array_equal(x, y) for x, y in zip(outs[0].polys, outs[1].polys))


# -------------------------------------------------------------------- encoding

def test_encode_roundtrip_example(desk):
    backend, _ = desk
    got = backend.decode(backend.encode([1.0, 2.0, -0.5]), 3)
    assert np.max(np.abs(got - [1.0, 2.0, -0.5])) <= 1e-4


def test_encode_zero_is_exact_zero(desk):
    backend, _ = desk
    pt = backend.encode(np.zeros(10))
    assert not pt.data.any()


def test_encode_broadcast_scalar(desk):
    backend, _ = desk
    got = backend.decode(backend.encode(np.full(backend.params.slot_count, 3.25)))
    assert np.max(np.abs(got - 3.25)) <= 1e-4


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=64))
def test_encode_roundtrip_property(desk, values):
    backend, _ = desk
    got = backend.decode(backend.encode(values), len(values))
    assert np.max(np.abs(got - values)) <= 1e-4


def test_encode_rejects_too_many_values(desk):
    backend, _ = desk
    with pytest.raises(HEError):
        backend.encode(np.ones(backend.params.slot_count + 1))


def test_encode_overflow(tiny_params):
    backend = CKKSBackend(tiny_params)
    with pytest.raises(HEError):
        backend.encode([1e12], level=0)


# ------------------------------------------------------------------ operations

def test_mul_pt_example(desk):
    backend, keys = desk
    ct = backend.encrypt_values([2.0, 3.0], keys)
    out = backend.mul_pt(ct, backend.encode([4.0, 5.0]))
    assert out.size == 2
    assert out.scale == ct.scale * backend.params.scale
    assert np.allclose(backend.decrypt_values(out, keys, 2), [8.0, 15.0], atol=TOL)


def test_mul_pt_by_ones_is_identity(desk):
    backend, keys = desk
    values = np.linspace(-5, 5, 40)
    ct = backend.encrypt_values(values, keys)
    out = backend.rescale(backend.mul_pt(ct, backend.encode(np.ones(backend.params.slot_count))))
    assert np.allclose(backend.decrypt_values(out, keys, 40), values, atol=TOL)


def test_mul_pt_level_mismatch(desk):
    backend, keys = desk
    ct = backend.encrypt_values([1.0], keys)
    with pytest.raises(HEError):
        backend.mul_pt(ct, backend.encode([1.0], level=1))


def test_mul_relin_rescale_example(desk):
    backend, keys = desk
    a = backend.encrypt_values([2.0], keys)
    b = backend.encrypt_values([3.0], keys)
    prod = backend.mul_ct(a, b)
    assert prod.size == 3
    out = backend.rescale(backend.relinearize(prod, keys))
    assert out.size == 2 and out.level == a.level - 1
    assert abs(backend.decrypt_values(out, keys, 1)[0] - 6.0) <= TOL


def test_relinearize_requires_size_three(desk):
    backend, keys = desk
    with pytest.raises(HEError):
        backend.relinearize(backend.encrypt_values([1.0], keys), keys)


def test_rescale_divides_scale_by_dropped_prime(desk):
    backend, keys = desk
    ct = backend.encrypt_values([1.0], keys)
    out = backend.rescale(ct)
    assert out.scale == ct.scale / backend.params.moduli[ct.level]
    assert out.level == ct.level - 1


def test_depth_guard(desk):
    backend, keys = desk
    depth = backend.params.depth
    ct = backend.encrypt_values([1.1, -0.9], keys)
    for _ in range(depth):
        ct = backend.rescale(backend.relinearize(backend.mul_ct(ct, ct), keys))
    assert ct.level == 0
    sq = backend.relinearize(backend.mul_ct(ct, ct), keys)
    with pytest.raises(NoiseBudgetExhausted):
        backend.rescale(sq)


def test_add_examples(desk):
    backend, keys = desk
    ct = backend.encrypt_values([1.0, 2.0], keys)
    assert np.allclose(backend.decrypt_values(backend.add_pt(ct, backend.encode([10.0, 20.0])), keys, 2), [11, 22], atol=TOL)
    assert np.allclose(backend.decrypt_values(backend.add_ct(ct, ct), keys, 2), [2, 4], atol=TOL)


def test_add_scale_mismatch(desk):
    backend, keys = desk
    ct = backend.encrypt_values([1.0], keys)
    with pytest.raises(HEError):
        backend.add_pt(ct, backend.encode([1.0], scale=2.0**30))


def test_rotate(desk):
    backend, keys = desk
    values = np.arange(backend.params.slot_count, dtype=float) / 100
    ct = backend.encrypt_values(values, keys)
    assert backend.rotate(ct, 0, keys) is ct
    for step in (1, 5, 100):
        got = backend.decrypt_values(backend.rotate(ct, step, keys), keys)
        assert np.max(np.abs(got - np.roll(values, -step))) <= TOL


def test_rotate_missing_key(desk):
    backend, keys = desk
    with pytest.raises(MissingKeyError):
        backend.rotate(backend.encrypt_values([1.0], keys), 7, keys)


def test_homomorphism_random_vectors(desk):
    backend, keys = desk
    rng = np.random.default_rng(7)
    for _ in range(5):
        x = rng.uniform(-10, 10, 64)
        y = rng.uniform(-10, 10, 64)
        cx = backend.encrypt_values(x, keys)
        cy = backend.encrypt_values(y, keys)
        dec = lambda c: backend.decrypt_values(c, keys, 64)  # noqa: E731
        assert np.max(np.abs(dec(backend.add_pt(cx, backend.encode(y))) - (x + y))) <= TOL
        assert np.max(np.abs(dec(backend.add_ct(cx, cy)) - (x + y))) <= TOL
        assert np.max(np.abs(dec(backend.rescale(backend.mul_pt(cx, backend.encode(y)))) - x * y)) <= TOL
        prod = backend.rescale(backend.relinearize(backend.mul_ct(cx, cy), keys))
        assert np.max(np.abs(dec(prod) - x * y)) <= TOL
        rot = backend.decrypt_values(backend.rotate(cx, 3, keys), keys)
        assert np.max(np.abs(rot[:61] - x[3:])) <= TOL


# ----------------------------------------------------------------------- noise

def test_fresh_budget_positive(desk):
    backend, keys = desk
    assert backend.noise_budget(backend.encrypt_values([1.0], keys), keys) > 0


def test_refresh_restores_budget(desk):
    backend, keys = desk
    fresh = backend.encrypt_values([0.5, -1.5], keys)
    ct = fresh
    for _ in range(backend.params.depth):
        ct = backend.rescale(backend.relinearize(backend.mul_ct(ct, ct), keys))
    spent = backend.noise_budget(ct, keys)
    renewed = backend.refresh(ct, keys)
    assert renewed.level == backend.params.depth
    assert backend.noise_budget(renewed, keys) > spent
    assert abs(backend.noise_budget(renewed, keys) - backend.noise_budget(fresh, keys)) < 2
    assert np.allclose(backend.decrypt_values(renewed, keys, 2), [0.0625, 5.0625], atol=TOL)


def test_undecryptable_ciphertext_raises(tiny_params):
    backend = CKKSBackend(tiny_params, seed=0)
    keys = backend.keygen(0)
    ct = backend.encrypt_values([1.0], keys, level=0)
    noise = np.random.default_rng(0).integers(0, tiny_params.moduli[0], ct.polys[1].shape, dtype=np.uint64)
    garbage = type(ct)((ct.polys[0], noise), 0, ct.scale)
    with pytest.raises(NoiseBudgetExhausted):
        backend.noise_budget(garbage, keys)


def test_add_noise_at_most_one_extra_bit(desk):
    backend, keys = desk
    rng = np.random.default_rng(3)
    x, y = rng.uniform(-10, 10, (2, 128))
    cx, cy = backend.encrypt_values(x, keys), backend.encrypt_values(y, keys)
    nx, ny = backend.measure_noise(cx, keys, x), backend.measure_noise(cy, keys, y)
    assert backend.measure_noise(backend.add_ct(cx, cy), keys, x + y) <= max(nx, ny) + 1


# ------------------------------------------------------------- cost backend

def test_published_table():
    t = CostTable.published(4096, 2)
    assert (t.plain_mult, t.ciph_mult, t.rescale, t.relinearization) == (1.0, 2.7, 7.6, 16.1)
    assert t.provenance == "paper-default(4096,2)"


def test_cost_table_validation():
    with pytest.raises(ParameterError):
        CostTable(ciph_mult=0.0, rescale=1.0, relinearization=1.0)
    with pytest.raises(ParameterError):
        CostTable(ciph_mult=1.0, rescale=1.0, relinearization=1.0, plain_mult=2.0)


def test_cost_backend_ciph_mult_plus_relin():
    backend = CostModelBackend(preset("n4096-d2"), CostTable.published(4096, 2))
    keys = backend.keygen()
    ev = Evaluator(backend, keys)
    ct = backend.encrypt_values([1.0], keys)
    ev.relinearize(ev.mul_ct(ct, ct))
    assert ev.ledger.estimated_time == pytest.approx(18.8)
    assert OpLedger().estimated_time == 0


def test_cost_backend_refuses_decrypt():
    backend = CostModelBackend(preset("n4096-d2"))
    keys = backend.keygen()
    with pytest.raises(HEError):
        backend.decrypt(backend.encrypt_values([1.0], keys), keys)


def test_ledger_merge_is_componentwise():
    a, b = OpLedger(plain_mults=2, rotations=1, estimated_time=1.5), OpLedger(plain_mults=1, ct_adds=4)
    m = a + b
    assert m.counts()["plain_mults"] == 3 and m.ct_adds == 4 and m.rotations == 1
    assert (a + b) + OpLedger(relins=1) == a + (b + OpLedger(relins=1))


def test_evaluator_relin_pairing_and_modes(desk):
    backend, keys = desk
    ct = backend.encrypt_values([2.0], keys)
    ev = Evaluator(backend, keys, "relin-only")
    out = ev.multiply(ct, backend.encrypt_values([3.0], keys))
    assert ev.ledger.counts()["ciph_mults"] == 1 and ev.ledger.relins == 1 and ev.ledger.rescales == 0
    assert out.level == ct.level
    ev = Evaluator(backend, keys, "rescale-all")
    out = ev.multiply(ct, backend.encode([3.0]))
    assert ev.ledger.plain_mults == 1 and ev.ledger.rescales == 1 and ev.ledger.relins == 0
    assert out.level == ct.level - 1
    with pytest.raises(ParameterError):
        Evaluator(backend, keys, "sometimes")


def test_exact_and_cost_backends_share_ledgers(desk):
    backend, keys = desk
    cost = CostModelBackend(backend.params)
    ckeys = cost.keygen(rotation_steps=(1, 2))
    ledgers = []
    for be, ks in ((backend, keys), (cost, ckeys)):
        ev = Evaluator(be, ks, "rescale-all")
        ct = be.encrypt_values([1.0, 2.0], ks)
        ct = ev.multiply(ct, be.encode([2.0, 2.0]))
        ct = ev.rotate_sum(ct, 1, 4)
        ledgers.append(ev.ledger.counts())
    assert ledgers[0] == ledgers[1]
    assert math.isclose(sum(ledgers[0].values()), 1 + 1 + 2 + 2)
