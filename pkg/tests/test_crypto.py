import inspect
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rffpuf import crypto, protocol
from rffpuf.crypto import (
    DecryptFailure,
    EncodingError,
    asym_decrypt,
    asym_encrypt,
    asym_keygen,
    ct_equal,
    encode_inputs,
    hash2,
    hash_tagged,
    id_bytes,
    xor_mask,
)

A = bytes(range(32))
B = bytes(range(32, 64))

# Produced with cryptography's SHA256 over a hand-written ">I"-length-prefixed
# encoding, not with this package.
HASH_VECTORS = [
    (A, id_bytes(7), "3a102c408d01aca8b0aa030bfa28dc756c0b721e7e72b09c08de64b73cc771d9"),
    (A, B, "ba5fa2b32e3bdb848cc57fb8b7a6eb910c8f3ea1d5fd6fd168ddd7fd15c170d5"),
    (b"\0", b"\0\0", "ca43f9fb2ce86dbcf9404af39a09f53a4ee674fa3565328f2ce205efeff306db"),
    (b"abc", b"d", "79dce3d749b9c00c37e4b749af84acc4163e5a1dd0240efa187adc21b3d09149"),
    (b"ab", b"cd", "db5c456e89613f0777a7cb1e52cc65482a8d1212c44b7bc6fac0c9e20d5fed6e"),
]
TAGGED = {
    1: "d89456e33465b5cbaa692761d3e259347880d3cc3e3d18c9d014b7e2f1c97ea6",
    2: "d0651a770fd3d3fece887bed2e975da7617871087ae2c934b7ac60b757faa768",
}


@pytest.mark.parametrize("x,y,out", HASH_VECTORS)
def test_hash2_vectors(x, y, out):
    assert hash2(x, y).hex() == out


@pytest.mark.parametrize("tag", [1, 2])
def test_hash_tagged_vectors(tag):
    assert hash_tagged(A, tag).hex() == TAGGED[tag]


def test_hash_tagged_rejects_other_tags():
    with pytest.raises(ValueError):
        hash_tagged(A, 3)


def test_encoding_is_prefix_free():
    assert hash2(b"abc", b"d") != hash2(b"ab", b"cd")
    assert encode_inputs([b"\x01"]) == b"\0\0\0\x01\x01"


def test_encoding_rejects_empty():
    with pytest.raises(EncodingError):
        encode_inputs([b""])


def test_id_bytes():
    assert id_bytes(0x01020304) == b"\x01\x02\x03\x04"
    with pytest.raises(EncodingError):
        id_bytes(2**32)
    with pytest.raises(EncodingError):
        id_bytes(-1)


@given(st.binary(min_size=32, max_size=32), st.binary(min_size=32, max_size=32))
def test_xor_involution(a, b):
    assert xor_mask(xor_mask(a, b), b) == a
    assert xor_mask(a, b) == xor_mask(b, a)
    assert xor_mask(a, a) == bytes(32)


def test_xor_width_mismatch():
    with pytest.raises(ValueError):
        xor_mask(bytes(32), bytes(4))


def test_asym_roundtrip_and_widths():
    rng = random.Random(1)
    keys = asym_keygen(rng)
    ct = asym_encrypt(A, keys.public, rng)
    assert asym_decrypt(ct, keys.private) == A
    assert len(ct.to_bytes()) == 80
    assert ct.ACCOUNTED_BITS == 512


@given(st.integers(0, 80 * 8 - 1))
def test_asym_detects_any_bitflip(pos):
    rng = random.Random(2)
    keys = asym_keygen(rng)
    raw = bytearray(asym_encrypt(B, keys.public, rng).to_bytes())
    raw[pos // 8] ^= 0x80 >> (pos % 8)
    with pytest.raises(DecryptFailure):
        asym_decrypt(crypto.AsymCiphertext.from_bytes(bytes(raw)), keys.private)


def test_asym_wrong_key():
    rng = random.Random(3)
    k1, k2 = asym_keygen(rng), asym_keygen(rng)
    with pytest.raises(DecryptFailure):
        asym_decrypt(asym_encrypt(A, k1.public, rng), k2.private)


def test_ct_equal():
    assert ct_equal(A, A)
    assert not ct_equal(A, B)


def test_credential_checks_use_constant_time_compare():
    src = inspect.getsource(protocol)
    assert "ct_equal(" in src
    # no credential or tag comparison with ==
    for needle in ("cred ==", "cred_g ==", "tag ==", "== m1.cred", "== m2.cred", "== msg.tag"):
        assert needle not in src
