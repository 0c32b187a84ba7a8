import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rffpuf.crypto import asym_encrypt, asym_keygen
from rffpuf.messages import (
    MESSAGE_TYPES,
    EnrollAck,
    EnrollM1,
    EnrollM2,
    KeyConfirm,
    MakeM1,
    MakeM2,
    MalformedMessage,
    accounted_bits,
    decode,
    encode,
    field_offsets,
    flip_bits,
    wire_bytes,
)

blocks = st.binary(min_size=32, max_size=32)
ids = st.integers(0, 2**32 - 1)


def _ct(seed):
    rng = random.Random(seed)
    return asym_encrypt(bytes(32), asym_keygen(rng).public, rng)


messages = st.one_of(
    st.builds(EnrollM1, ids, blocks, st.integers(0, 5).map(_ct)),
    st.builds(EnrollM2, blocks, ids, blocks),
    st.builds(EnrollAck, ids, blocks),
    st.builds(MakeM1, ids, blocks, blocks),
    st.builds(MakeM2, blocks, blocks),
    st.builds(KeyConfirm, blocks),
)


@given(messages)
def test_roundtrip(msg):
    name = type(msg).__name__
    raw = encode(msg)
    assert len(raw) == wire_bytes(name)
    assert decode(name, raw) == msg


def test_accounted_bits():
    assert accounted_bits(MakeM1) == 544
    assert accounted_bits(MakeM2) == 512
    assert accounted_bits(EnrollM1) == 32 + 256 + 512
    assert accounted_bits(KeyConfirm) == 256


def test_field_offsets_tile_the_frame():
    for name in MESSAGE_TYPES:
        spans = sorted(field_offsets(name).values())
        assert spans[0][0] == 0
        assert spans[-1][1] == wire_bytes(name) * 8
        assert all(a[1] == b[0] for a, b in zip(spans, spans[1:]))


def test_wrong_length_rejected():
    with pytest.raises(MalformedMessage):
        decode("MakeM2", bytes(63))
    with pytest.raises(MalformedMessage):
        decode("Nope", b"")


@given(st.integers(0, 543))
def test_flip_bits_hits_one_bit(pos):
    raw = encode(MakeM1(5, bytes(32), bytes(32)))
    out = flip_bits(raw, [pos])
    diff = int.from_bytes(raw, "big") ^ int.from_bytes(out, "big")
    assert diff == 1 << (len(raw) * 8 - 1 - pos)
