import pytest

from rffpuf import observe, protocol
from rffpuf.entities import d2d_storage_bits, drone_snapshot
from rffpuf.messages import KeyConfirm, MakeM1, MakeM2
from rffpuf.netsim import Simulator

GSS = 100
D2D_OPS = {"puf": 2, "hash": 9}
D2G_OPS = {"puf": 2, "hash": 7}


@pytest.fixture
def sim():
    cfg = {
        "domains": [{"name": "d1", "gss": GSS}],
        "drones": [{"id": 1, "domain": "d1"}, {"id": 2, "domain": "d1"}],
        "sessions": [{"op": "enroll", "drone": 1}, {"op": "enroll", "drone": 2}],
    }
    s = Simulator(cfg, 11)
    s.run()
    with observe.recording(s.recorder):
        yield s


def _ops(ent, snap):
    d = ent.ledger.since(snap, "make")
    return {"puf": d["puf"], "hash": d["hash"]}


def exchange(ini, resp, tamper=None):
    p_i = protocol.profile_between(ini, resp.id)
    p_r = protocol.profile_between(resp, ini.id)
    si, sr = ini.ledger.snapshot(), resp.ledger.snapshot()
    m1 = protocol.make_initiate(ini, p_i, resp.id, ini.rng)
    if tamper:
        m1 = tamper(m1)
    m2, o_r = protocol.make_respond(resp, p_r, m1, resp.rng)
    o_i = protocol.make_complete(ini, p_i, resp.id, m2, ini.rng)
    protocol.key_confirm(ini, resp)
    return o_i, o_r, _ops(ini, si), _ops(resp, sr)


@pytest.mark.parametrize("ini,resp,ops,role", [
    (2, 1, D2D_OPS, "holder"),
    (1, 2, D2D_OPS, "generator"),
    (1, GSS, D2G_OPS, "generator"),
    (GSS, 1, D2G_OPS, "holder"),
])
def test_variants_agree_with_exact_costs(sim, ini, resp, ops, role):
    keys = set()
    for _ in range(3):
        o_i, o_r, c_i, c_r = exchange(sim.entity(ini), sim.entity(resp))
        assert o_i.session_key == o_r.session_key
        assert o_i.role == role and o_i.initiator and not o_r.initiator
        assert c_i == ops and c_r == ops
        keys.add(o_i.session_key)
    assert len(keys) == 3


def test_directions_interleave(sim):
    d1, d2 = sim.entity(1), sim.entity(2)
    for a, b in [(d1, d2), (d2, d1), (d2, d1), (d1, d2)]:
        o_i, o_r, _, _ = exchange(a, b)
        assert o_i.session_key == o_r.session_key


def test_bad_credential_costs_bounded_and_changes_nothing(sim):
    d1, d2 = sim.entity(1), sim.entity(2)
    chain = protocol.chain_for(d1, protocol.profile_between(d1, 2), 2)
    before = (chain.current, chain.previous)
    prof = protocol.profile_between(d2, 1)
    m1 = protocol.make_initiate(d2, prof, 1, d2.rng)
    bad = MakeM1(m1.sender_id, m1.x_star, bytes(32))
    snap = d1.ledger.snapshot()
    with pytest.raises(protocol.CredentialMismatch):
        protocol.make_respond(d1, protocol.profile_between(d1, 2), bad, d1.rng)
    assert _ops(d1, snap)["puf"] <= 1 and _ops(d1, snap)["hash"] <= 3
    assert (chain.current, chain.previous) == before
    assert not d1.pending


def test_lost_m2_recovers_through_previous_epoch(sim):
    d1, d2 = sim.entity(1), sim.entity(2)
    prof2, prof1 = protocol.profile_between(d2, 1), protocol.profile_between(d1, 2)
    m1 = protocol.make_initiate(d2, prof2, 1, d2.rng)
    protocol.make_respond(d1, prof1, m1, d1.rng)
    # M2 lost: both sides time out
    protocol.session_close(d2, 1)
    protocol.session_close(d1, 2)
    assert protocol.chain_for(d1, prof1, 2).previous is not None
    o_i, o_r, _, _ = exchange(d2, d1)
    assert o_i.session_key == o_r.session_key
    assert protocol.chain_for(d1, prof1, 2).previous is None


def test_confirm_mismatch_rolls_back(sim):
    d1, d2 = sim.entity(1), sim.entity(2)
    prof2, prof1 = protocol.profile_between(d2, 1), protocol.profile_between(d1, 2)
    chain = protocol.chain_for(d1, prof1, 2)
    base = chain.current
    m1 = protocol.make_initiate(d2, prof2, 1, d2.rng)
    m2, _ = protocol.make_respond(d1, prof1, m1, d1.rng)
    protocol.make_complete(d2, prof2, 1, m2, d2.rng)
    assert chain.current is not base
    with pytest.raises(protocol.ConfirmMismatch):
        protocol.confirm_receive(d1, 2, KeyConfirm(bytes(32)))
    assert chain.current is base and chain.previous is None


def test_tampered_m2_rejected_by_initiator(sim):
    d1, d2 = sim.entity(1), sim.entity(2)
    prof2, prof1 = protocol.profile_between(d2, 1), protocol.profile_between(d1, 2)
    m1 = protocol.make_initiate(d2, prof2, 1, d2.rng)
    m2, _ = protocol.make_respond(d1, prof1, m1, d1.rng)
    flipped = bytes([m2.x_star[0] ^ 1]) + m2.x_star[1:]
    with pytest.raises(protocol.CredentialMismatch):
        protocol.make_complete(d2, prof2, 1, MakeM2(flipped, m2.cred), d2.rng)


def test_busy_and_unknown_peer(sim):
    d2 = sim.entity(2)
    prof = protocol.profile_between(d2, 1)
    protocol.make_initiate(d2, prof, 1, d2.rng)
    with pytest.raises(protocol.SessionBusy):
        protocol.make_initiate(d2, prof, 1, d2.rng)
    with pytest.raises(protocol.UnknownPeer):
        protocol.make_initiate(d2, protocol.profile_between(d2, 777), 777, d2.rng)


def test_d2d_storage_bits(sim):
    assert d2d_storage_bits(sim.entity(2), 1) == 864
    assert d2d_storage_bits(sim.entity(1), 2) == 608


def test_nothing_secret_at_rest(sim):
    for _ in range(2):
        exchange(sim.entity(2), sim.entity(1))
        exchange(sim.entity(GSS), sim.entity(1))
    secret = {v.hex() for v in sim.recorder.of("secret") + sim.recorder.of("session_key")}
    assert secret
    for d in (1, 2):
        ent = sim.entity(d)
        assert not ent.session_cache and not ent.pending
        snap = repr(drone_snapshot(ent))
        assert not any(s in snap for s in secret)
