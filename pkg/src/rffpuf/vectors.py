"""Reference vectors for reimplementations in other languages."""

from __future__ import annotations

import json
import random

from . import crypto, messages
from .netsim import Simulator
from .puf import puf_eval, puf_new
from .rffi import transmitter_new

VECTOR_SEED = 0


def _h(b: bytes) -> str:
    return b.hex()


def crypto_vectors() -> dict:
    a = bytes(range(32))
    b = bytes(range(32, 64))
    rng = random.Random("vectors:asym")
    keys = crypto.asym_keygen(rng)
    ct = crypto.asym_encrypt(a, keys.public, rng)
    return {
        "hash2": [
            {"x": _h(a), "y": _h(crypto.id_bytes(7)), "out": _h(crypto.hash2(a, crypto.id_bytes(7)))},
            {"x": _h(a), "y": _h(b), "out": _h(crypto.hash2(a, b))},
            {"x": "00", "y": "0000", "out": _h(crypto.hash2(b"\0", b"\0\0"))},
        ],
        "encode_inputs": {"args": [_h(a), _h(crypto.id_bytes(7))],
                          "out": _h(crypto.encode_inputs([a, crypto.id_bytes(7)]))},
        "hash_tagged": [{"s": _h(a), "tag": t, "out": _h(crypto.hash_tagged(a, t))} for t in (1, 2)],
        "xor": {"a": _h(a), "b": _h(b), "out": _h(crypto.xor_mask(a, b))},
        "asym": {
            "private": _h(keys.private), "public": _h(keys.public), "plaintext": _h(a),
            "ciphertext": _h(ct.to_bytes()),
            "decrypted": _h(crypto.asym_decrypt(ct, keys.private)),
        },
    }


def model_vectors() -> dict:
    dev = puf_new(42)
    challenges = [bytes(32), bytes([0xFF] * 32), bytes(range(32))]
    fp = transmitter_new(42)
    return {
        "puf": {"device_seed": 42,
                "responses": [{"c": _h(c), "r": _h(puf_eval(dev, c))} for c in challenges]},
        "rffi": {"owner_seed": 42, "dim": 64, "head": [round(float(v), 12) for v in fp.vector[:8]]},
        "bits": {name: messages.accounted_bits(cls) for name, cls in messages.MESSAGE_TYPES.items()},
        "wire_bytes": {name: messages.wire_bytes(name) for name in messages.MESSAGE_TYPES},
    }


REFERENCE_RUN = {
    "name": "vectors-reference",
    "domains": [{"name": "d1", "gss": 100}],
    "drones": [{"id": 1, "domain": "d1"}, {"id": 2, "domain": "d1"}],
    "sessions": [
        {"op": "enroll", "drone": 1},
        {"op": "enroll", "drone": 2},
        {"op": "make", "pair": [2, 1], "direction": "alternate", "count": 2},
        {"op": "make", "pair": [1, 100], "direction": "alternate", "count": 2},
    ],
}


def transcript_vectors(seed: int = VECTOR_SEED) -> dict:
    sim = Simulator(REFERENCE_RUN, seed)
    rep = sim.run()
    frames = [r for r in sim.log if r["event"] == "send"]
    return {
        "seed": seed,
        "config": REFERENCE_RUN,
        "frames": frames,
        "session_keys": [{"session_id": k["session_id"], "pair": k["pair"], "profile": k["profile"],
                          "key": _h(k["key"])} for k in sim.session_keys],
        "verdict": rep["verdict"],
    }


def build() -> dict:
    return {
        "schema": 1,
        "crypto": crypto_vectors(),
        "models": model_vectors(),
        "protocol": transcript_vectors(),
    }


def dumps(vectors: dict) -> str:
    return json.dumps(vectors, sort_keys=True, indent=1) + "\n"


def emit_vectors(path) -> str:
    text = dumps(build())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return text
