import os
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scproto.primitives import (
    DecryptionError,
    _pairing_py,
    crhf_hash,
    get_group,
    hgen,
    pke_dec,
    pke_enc,
    sample_keys,
    se_dec,
    se_enc,
    sign,
    verify,
)
from scproto.primitives.schemes import SIG_BYTES

try:
    from scproto.primitives import _pairing_core
except ImportError:  # pragma: no cover
    _pairing_core = None


GROUPS = ["mock", "curve"]


# -- key sampling


def test_se_keys_deterministic_under_seed():
    assert sample_keys("SE", 7) == sample_keys("SE", 7)
    assert sample_keys("SE", 7) != sample_keys("SE", 8)


def test_pke_public_differs_from_secret():
    k = sample_keys("PKE", 1)
    assert k.public is not None and k.public != k.secret


def test_sig_public_keys_do_not_collide():
    pubs = {sample_keys("SIG", i).public for i in range(1000)}
    assert len(pubs) == 1000


def test_unknown_scheme():
    with pytest.raises(ValueError):
        sample_keys("MAC", 1)


# -- symmetric encryption


def test_se_empty_message():
    key = sample_keys("SE", 1).secret
    assert se_dec(key, se_enc(key, b"")) == b""


def test_se_large_messages_round_trip():
    rng = random.Random(3)
    key = sample_keys("SE", 2).secret
    for i in range(100):
        size = (1 << 20) if i % 25 == 0 else rng.randrange(1, 4096)
        m = os.urandom(size)
        assert se_dec(key, se_enc(key, m)) == m


def test_se_rejects_flipped_bit():
    key = sample_keys("SE", 1).secret
    ct = bytearray(se_enc(key, b"attack at dawn"))
    for pos in (0, 12, len(ct) - 1):
        bad = bytearray(ct)
        bad[pos] ^= 1
        with pytest.raises(DecryptionError):
            se_dec(key, bytes(bad))
    with pytest.raises(DecryptionError):
        se_dec(key, b"short")


# -- signatures


def test_sign_verify_round_trip_and_wrong_key():
    a, b = sample_keys("SIG", 1), sample_keys("SIG", 2)
    sigma = sign(a.secret, b"msg")
    assert verify(a.public, sigma, b"msg")
    assert not verify(b.public, sigma, b"msg")
    assert not verify(a.public, sigma, b"msh")


def test_random_signatures_never_verify():
    rng = random.Random(11)
    k = sample_keys("SIG", 5)
    for _ in range(10_000):
        m = rng.randbytes(rng.randrange(0, 40))
        assert not verify(k.public, rng.randbytes(SIG_BYTES), m)


@given(st.binary(max_size=256))
@settings(max_examples=50, deadline=None)
def test_signature_correctness(m):
    k = sample_keys("SIG", "prop")
    assert verify(k.public, sign(k.secret, m), m)


# -- public-key encryption


def test_pke_round_trip_and_determinism():
    k = sample_keys("PKE", 4)
    r = bytes(range(32))
    ct = pke_enc(k.public, b"hello", r)
    assert pke_enc(k.public, b"hello", r) == ct
    assert pke_dec(k.secret, ct) == b"hello"


def test_pke_wrong_key_fails():
    rng = random.Random(5)
    for i in range(100):
        a, b = sample_keys("PKE", f"a{i}"), sample_keys("PKE", f"b{i}")
        ct = pke_enc(a.public, rng.randbytes(16), rng.randbytes(32))
        assert pke_dec(b.secret, ct) is None


def test_pke_malformed_ciphertext():
    k = sample_keys("PKE", 4)
    assert pke_dec(k.secret, b"") is None
    assert pke_dec(k.secret, b"x" * 80) is None
    with pytest.raises(ValueError):
        pke_enc(k.public, b"m", b"short")


# -- keyed hashing


def test_crhf_stable_and_compressing():
    hk = hgen(128, 1, seed="fixed")
    assert crhf_hash(hk, b"") == crhf_hash(hgen(128, 1, seed="fixed"), b"")
    assert len(crhf_hash(hk, b"x" * 100)) == 16


def test_crhf_index_separation():
    hk1, hk2 = hgen(128, 1, seed=0), hgen(128, 2, seed=0)
    rng = random.Random(0)
    for _ in range(10_000):
        m = rng.randbytes(rng.randrange(0, 64))
        assert crhf_hash(hk1, m) != crhf_hash(hk2, m)


def test_crhf_no_collisions_on_a_million_inputs():
    hk = hgen(128, 1, seed=1)
    seen = {crhf_hash(hk, i.to_bytes(4, "big")) for i in range(1_000_000)}
    assert len(seen) == 1_000_000


# -- bilinear groups


@pytest.mark.parametrize("name", GROUPS)
def test_bilinearity_small_scalars(name):
    g = get_group(name)
    P = g.generator
    base = g.pair(P, P)
    assert base != g.gt_one
    for a in (1, 2, 3, 5):
        for b in (1, 2, 3, 5):
            assert g.pair(a * P, b * P) == base ** (a * b)


@pytest.mark.parametrize("name", GROUPS)
def test_pair_with_zero(name):
    g = get_group(name)
    X = g.hash_to_g1("H1", b"x")
    assert g.pair(0 * g.generator, X) == g.gt_one


@pytest.mark.parametrize("name", GROUPS)
def test_pair_additive_in_first_argument(name):
    g = get_group(name)
    P = g.generator
    rng = random.Random(9)
    for _ in range(100 if name == "mock" else 20):
        a, b, c = (g.random_scalar(rng) for _ in range(3))
        left = g.pair(a * P, b * P) * g.pair(c * P, b * P)
        assert left == g.pair((a + c) * P, b * P)


@pytest.mark.parametrize("name", GROUPS)
def test_hash_to_g1_tags_independent(name):
    g = get_group(name)
    for i in range(50):
        m = str(i).encode()
        assert g.hash_to_g1("H1", m) == g.hash_to_g1("H1", m)
        assert g.hash_to_g1("H1", m) != g.hash_to_g1("H5", m)


@pytest.mark.parametrize("name", GROUPS)
def test_hash_gt_bit_length(name):
    g = get_group(name)
    one = g.gt_one
    for nbits in (1, 7, 8, 9, 128, 300):
        out = g.hash_gt(one, nbits)
        assert len(out) == (nbits + 7) // 8
        assert int.from_bytes(out, "big") < (1 << nbits)
        assert out == g.hash_gt(one, nbits)


@pytest.mark.parametrize("name", GROUPS)
def test_element_serialization_round_trip(name):
    g = get_group(name)
    x = g.hash_to_g1("H1", b"ser")
    assert g.decode_g1(x.encode()) == x
    e = g.pair(x, g.generator)
    assert g.decode_gt(e.encode()) == e
    assert g.decode_g1(g.g1_zero.encode()) == g.g1_zero


def test_curve_rejects_off_curve_point():
    g = get_group("curve")
    raw = bytearray(g.generator.encode())
    raw[-1] ^= 1
    with pytest.raises(ValueError):
        g.decode_g1(bytes(raw))


@pytest.mark.skipif(_pairing_core is None, reason="compiled kernel not built")
def test_compiled_kernel_matches_python_kernel():
    rng = random.Random(21)
    gen = get_group("curve").generator.value
    for _ in range(25):
        a = _pairing_py.g1_mul(rng.randrange(1, _pairing_py.Q_ORDER), gen)
        b = _pairing_py.g1_mul(rng.randrange(1, _pairing_py.Q_ORDER), gen)
        k = rng.randrange(1, 1 << 64)
        assert _pairing_core.g1_mul(k, a) == _pairing_py.g1_mul(k, a)
        assert _pairing_core.g1_add(a, b) == _pairing_py.g1_add(a, b)
        e_c, e_p = _pairing_core.pair(a, b), _pairing_py.pair(a, b)
        assert e_c == e_p
        assert _pairing_core.gt_pow(e_c, k) == _pairing_py.gt_pow(e_p, k)
        assert _pairing_core.gt_inv(e_c) == _pairing_py.gt_inv(e_p)
        x = rng.randrange(_pairing_py.P_MOD)
        assert _pairing_core.lift_x(x) == _pairing_py.lift_x(x)
    assert _pairing_core.pair(None, gen) == _pairing_py.pair(None, gen)


def test_pure_python_fallback_selected_by_env():
    import subprocess
    import sys

    code = "from scproto.primitives import kernel; print(kernel.IMPLEMENTATION)"
    env = dict(os.environ, SCPROTO_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "python"
