import hashlib
import json
import struct
from pathlib import Path

from rffpuf import vectors

FIXTURE = Path(__file__).parent / "fixtures" / "vectors.json"


def test_fixture_is_reproduced_exactly():
    assert vectors.dumps(vectors.build()) == FIXTURE.read_text()


def test_hash_vectors_agree_with_plain_sha256():
    v = json.loads(FIXTURE.read_text())
    for case in v["crypto"]["hash2"]:
        x, y = bytes.fromhex(case["x"]), bytes.fromhex(case["y"])
        enc = struct.pack(">I", len(x)) + x + struct.pack(">I", len(y)) + y
        assert hashlib.sha256(enc).hexdigest() == case["out"]


def test_reference_run_is_honest():
    v = json.loads(FIXTURE.read_text())["protocol"]
    assert v["verdict"] == "pass"
    keys = [k["key"] for k in v["session_keys"]]
    assert len(keys) == len(set(keys))
    make = [f for f in v["frames"] if f["msg_type"] in ("MakeM1", "MakeM2")]
    assert {f["bits"] for f in make} == {544, 512}
