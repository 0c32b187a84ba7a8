"""Protocol messages and their wire codec.

Fields go on the wire in declaration order, big-endian, without padding. An
enrollment ciphertext also carries its 16-byte tag, which is not accounted.
"""

from __future__ import annotations

from dataclasses import dataclass

from .crypto import BLOCK_BYTES, ID_BYTES, TAG_BYTES, AsymCiphertext

ID, BLOCK, CIPHERTEXT = "id", "block", "ciphertext"
FIELD_BITS = {ID: 32, BLOCK: 256, CIPHERTEXT: 512}
_WIRE_BYTES = {ID: ID_BYTES, BLOCK: BLOCK_BYTES, CIPHERTEXT: 2 * BLOCK_BYTES + TAG_BYTES}


class MalformedMessage(ValueError):
    pass


@dataclass(frozen=True)
class EnrollM1:
    id_a: int
    n_a: bytes
    e_ag: AsymCiphertext
    LAYOUT = (("id_a", ID), ("n_a", BLOCK), ("e_ag", CIPHERTEXT))


@dataclass(frozen=True)
class EnrollM2:
    x_ba: bytes
    id_b: int
    cred_g: bytes
    LAYOUT = (("x_ba", BLOCK), ("id_b", ID), ("cred_g", BLOCK))


@dataclass(frozen=True)
class EnrollAck:
    """Sent instead of EnrollM2 when the joining drone has no enrolled peers."""

    id_g: int
    cred_g: bytes
    LAYOUT = (("id_g", ID), ("cred_g", BLOCK))


@dataclass(frozen=True)
class MakeM1:
    sender_id: int
    x_star: bytes
    cred: bytes
    LAYOUT = (("sender_id", ID), ("x_star", BLOCK), ("cred", BLOCK))


@dataclass(frozen=True)
class MakeM2:
    x_star: bytes
    cred: bytes
    LAYOUT = (("x_star", BLOCK), ("cred", BLOCK))


@dataclass(frozen=True)
class KeyConfirm:
    tag: bytes
    LAYOUT = (("tag", BLOCK),)


MESSAGE_TYPES = {cls.__name__: cls for cls in (EnrollM1, EnrollM2, EnrollAck, MakeM1, MakeM2, KeyConfirm)}


def accounted_bits(msg) -> int:
    return sum(FIELD_BITS[kind] for _, kind in msg.LAYOUT)


def wire_bytes(msg_type: str) -> int:
    return sum(_WIRE_BYTES[kind] for _, kind in MESSAGE_TYPES[msg_type].LAYOUT)


def field_bytes(msg) -> dict:
    """Each field as raw bytes, keyed by name (ids as 4-byte big-endian)."""
    out = {}
    for name, kind in msg.LAYOUT:
        v = getattr(msg, name)
        if kind == ID:
            out[name] = v.to_bytes(ID_BYTES, "big")
        elif kind == CIPHERTEXT:
            out[name] = v.to_bytes()
        else:
            out[name] = bytes(v)
    return out


def encode(msg) -> bytes:
    parts = field_bytes(msg)
    out = b"".join(parts[name] for name, _ in msg.LAYOUT)
    if len(out) != wire_bytes(type(msg).__name__):
        raise MalformedMessage(f"{type(msg).__name__} field width mismatch")
    return out


def decode(msg_type: str, data: bytes):
    try:
        cls = MESSAGE_TYPES[msg_type]
    except KeyError:
        raise MalformedMessage(f"unknown message type {msg_type!r}") from None
    if len(data) != wire_bytes(msg_type):
        raise MalformedMessage(f"{msg_type} expects {wire_bytes(msg_type)} bytes, got {len(data)}")
    vals = {}
    pos = 0
    for name, kind in cls.LAYOUT:
        chunk = data[pos:pos + _WIRE_BYTES[kind]]
        pos += _WIRE_BYTES[kind]
        if kind == ID:
            vals[name] = int.from_bytes(chunk, "big")
        elif kind == CIPHERTEXT:
            vals[name] = AsymCiphertext.from_bytes(chunk)
        else:
            vals[name] = chunk
    return cls(**vals)


def field_offsets(msg_type: str) -> dict:
    """Bit range [start, stop) of every field within the wire encoding."""
    out = {}
    pos = 0
    for name, kind in MESSAGE_TYPES[msg_type].LAYOUT:
        width = _WIRE_BYTES[kind] * 8
        out[name] = (pos, pos + width)
        pos += width
    return out


def flip_bits(data: bytes, positions) -> bytes:
    buf = bytearray(data)
    for p in positions:
        buf[p // 8] ^= 0x80 >> (p % 8)
    return bytes(buf)


def to_json_fields(msg) -> dict:
    return {k: v.hex() for k, v in field_bytes(msg).items()}

