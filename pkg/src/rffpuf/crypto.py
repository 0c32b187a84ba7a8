"""Deterministic primitives shared by every entity.

Hash: SHA-256 over a length-prefixed encoding of the inputs.
Asymmetric scheme: ECIES-style hybrid over X25519 with HKDF-SHA256 and an
HMAC-SHA256 tag truncated to 128 bits.
"""

from __future__ import annotations

import hashlib
import hmac
import random
from dataclasses import dataclass

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import x25519
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from . import observe

HASH_NAME = "sha256"
BLOCK_BYTES = 32
BLOCK_BITS = 256
ID_BYTES = 4
ID_BITS = 32
TAG_BYTES = 16
ZERO_BLOCK = bytes(BLOCK_BYTES)

_MAX_ARG = 2**32


class EncodingError(ValueError):
    pass


class DecryptFailure(Exception):
    """Ciphertext failed its integrity check or could not be parsed."""


def id_bytes(ident: int) -> bytes:
    if not 0 <= ident < 2**ID_BITS:
        raise EncodingError(f"id {ident} does not fit in 32 bits")
    return ident.to_bytes(ID_BYTES, "big")


def encode_inputs(args) -> bytes:
    """Prefix-free encoding: 4-byte big-endian length, then the bytes, per argument."""
    out = bytearray()
    for a in args:
        a = bytes(a)
        if not a:
            raise EncodingError("empty hash argument")
        if len(a) >= _MAX_ARG:
            raise EncodingError("hash argument longer than 2**32 - 1 bytes")
        out += len(a).to_bytes(4, "big")
        out += a
    return bytes(out)


def hash2(x: bytes, y: bytes) -> bytes:
    out = hashlib.sha256(encode_inputs([x, y])).digest()
    t = observe.tracer()
    if t is not None:
        t.on_hash(x, y, out)
    return out


def hash_tagged(s: bytes, tag: int) -> bytes:
    if tag not in (1, 2):
        raise ValueError(f"hash tag must be 1 or 2, got {tag!r}")
    return hash2(s, bytes([tag]))


def xor_mask(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise ValueError(f"xor operands differ in width: {len(a)} vs {len(b)}")
    out = (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")
    t = observe.tracer()
    if t is not None:
        t.on_xor(a, b, out)
    return out


def ct_equal(a: bytes, b: bytes) -> bool:
    # every credential comparison goes through here
    return hmac.compare_digest(a, b)


def random_block(rng: random.Random) -> bytes:
    out = rng.randbytes(BLOCK_BYTES)
    t = observe.tracer()
    if t is not None:
        t.on_random(out)
    return out


@dataclass(frozen=True)
class AsymKeyPair:
    public: bytes
    private: bytes = b""

    def __repr__(self):
        return f"AsymKeyPair(public={self.public.hex()[:16]}...)"


@dataclass(frozen=True)
class AsymCiphertext:
    ephemeral: bytes
    body: bytes
    tag: bytes

    # accounted width: ephemeral point + masked body; the tag is carried but not counted
    ACCOUNTED_BITS = 512

    def to_bytes(self) -> bytes:
        return self.ephemeral + self.body + self.tag

    @classmethod
    def from_bytes(cls, data: bytes) -> "AsymCiphertext":
        if len(data) != 2 * BLOCK_BYTES + TAG_BYTES:
            raise DecryptFailure(f"ciphertext has {len(data)} bytes")
        return cls(data[:32], data[32:64], data[64:])


def _public_of(private: bytes) -> bytes:
    key = x25519.X25519PrivateKey.from_private_bytes(private)
    return key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)


def asym_keygen(rng: random.Random) -> AsymKeyPair:
    private = rng.randbytes(32)
    pair = AsymKeyPair(public=_public_of(private), private=private)
    t = observe.tracer()
    if t is not None:
        t.on_keygen(pair.public, pair.private)
    return pair


def _kdf(shared: bytes, eph: bytes, pk: bytes) -> tuple[bytes, bytes]:
    okm = HKDF(
        algorithm=hashes.SHA256(), length=64, salt=None, info=b"rffpuf-ecies" + eph + pk
    ).derive(shared)
    return okm[:32], okm[32:]


def asym_encrypt(m: bytes, pk: bytes, rng: random.Random) -> AsymCiphertext:
    if len(m) != BLOCK_BYTES:
        raise ValueError("plaintext must be a 256-bit block")
    eph_priv = x25519.X25519PrivateKey.from_private_bytes(rng.randbytes(32))
    eph = eph_priv.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    shared = eph_priv.exchange(x25519.X25519PublicKey.from_public_bytes(pk))
    mask, mac_key = _kdf(shared, eph, pk)
    body = bytes(a ^ b for a, b in zip(m, mask))
    tag = hmac.new(mac_key, eph + body, hashlib.sha256).digest()[:TAG_BYTES]
    ct = AsymCiphertext(eph, body, tag)
    t = observe.tracer()
    if t is not None:
        t.on_encrypt(pk, m, ct.to_bytes())
    return ct


def asym_decrypt(c: AsymCiphertext, sk: bytes) -> bytes:
    if len(c.ephemeral) != 32 or len(c.body) != 32 or len(c.tag) != TAG_BYTES:
        raise DecryptFailure("malformed ciphertext")
    priv = x25519.X25519PrivateKey.from_private_bytes(sk)
    pk = priv.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    try:
        shared = priv.exchange(x25519.X25519PublicKey.from_public_bytes(c.ephemeral))
    except ValueError as e:  # low-order point
        raise DecryptFailure(str(e)) from None
    mask, mac_key = _kdf(shared, c.ephemeral, pk)
    expect = hmac.new(mac_key, c.ephemeral + c.body, hashlib.sha256).digest()[:TAG_BYTES]
    if not hmac.compare_digest(expect, c.tag):
        raise DecryptFailure("ciphertext tag mismatch")
    return bytes(a ^ b for a, b in zip(c.body, mask))
