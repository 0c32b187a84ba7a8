"""Enrollment and MAKE state machines.

Every MAKE variant is a session between a *generator*, whose PUF mints the
shared secret, and a *holder*, which keeps that secret OTP-wrapped under a pad
only it can regenerate. D2D: the earlier-enrolled drone generates and the
later one holds. D2G: the drone generates and the GSS holds.

Either side may initiate:

* holder-initiated:  holder -> M1 <x = C* ^ H(s,1), H(x ^ s, holder id)>
                     generator -> M2 <x = s* ^ H(s,2), H(x ^ s, C*)>
* generator-initiated: generator -> M1 <x = s* ^ H(s,1), H(x ^ s, generator id)>
                     holder -> M2 <x = C* ^ H(s,2), H(x ^ s, s*)>

and both derive sk = H(C*, s*). Chain updates are applied when a party
finishes its part, with the replaced epoch retained until key confirmation.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from . import observe
from .crypto import (
    DecryptFailure,
    asym_decrypt,
    asym_encrypt,
    ct_equal,
    id_bytes,
    random_block,
    xor_mask,
)
from .entities import (
    Chain,
    DroneRecord,
    DroneState,
    Epoch,
    GssSlot,
    GssState,
    PeerSlot,
)
from .messages import EnrollAck, EnrollM1, EnrollM2, KeyConfirm, MakeM1, MakeM2, encode
from .rffi import ROGUE, classify

ENROLL = "enroll"


class ProtocolError(Exception):
    reason = "protocol-error"


class UnknownGss(ProtocolError):
    reason = "unknown-gss"


class UnknownPeer(ProtocolError):
    reason = "unknown-peer"


class SessionBusy(ProtocolError):
    reason = "session-busy"


class NoSession(ProtocolError):
    reason = "no-session"


class CredentialMismatch(ProtocolError):
    reason = "credential-mismatch"


class EnrollAuthFailure(ProtocolError):
    reason = "enroll-auth-failure"


class RogueSender(ProtocolError):
    reason = "rffi-rogue"


class ConfirmMismatch(ProtocolError):
    reason = "confirm-mismatch"


class EnrollDecryptFailure(ProtocolError):
    reason = "decrypt-failure"


@dataclass(frozen=True)
class RoleProfile:
    kind: str
    generator: str
    holder: str
    derivation_depth: int


D2D = RoleProfile("d2d", generator="earlier-enrolled drone", holder="later-enrolled drone",
                  derivation_depth=2)
D2G = RoleProfile("d2g", generator="drone", holder="gss", derivation_depth=1)
PROFILES = {"d2d": D2D, "d2g": D2G}


@dataclass(frozen=True)
class SessionOutcome:
    peer_id: int
    profile: str
    role: str
    initiator: bool
    session_key: bytes
    epoch: int
    transcript_hash: bytes


def _transcript_hash(m1: bytes, m2: bytes) -> bytes:
    # bookkeeping digest, not a protocol hash: never ledgered
    return hashlib.sha256(m1 + m2).digest()


# role adapters


def chain_for(ent, profile: RoleProfile, peer_id: int) -> Chain:
    if profile.kind == "d2d":
        slot = ent.peer_slots.get(peer_id)
        if slot is None:
            raise UnknownPeer(f"{ent.id} has no slot for {peer_id}")
        return slot.chain
    if isinstance(ent, GssState):
        rec = ent.drone_records.get(peer_id)
        if rec is None:
            raise UnknownPeer(f"GSS {ent.id} has no record for {peer_id}")
        return rec.chain
    slot = ent.gss_slot
    if slot is None or slot.gss_id != peer_id:
        raise UnknownPeer(f"drone {ent.id} is not enrolled with GSS {peer_id}")
    return slot.chain


def _holder_pad(holder, profile: RoleProfile, peer_id: int, c: bytes) -> bytes:
    """OTP key under which the holder keeps the shared secret for this epoch."""
    r = holder.puf_eval(c)
    if profile.kind == "d2d":
        s_ag = holder.hash2(xor_mask(r, holder.nonce), id_bytes(holder.gss_slot.gss_id))
        observe.note("secret", s_ag, what="d2d-wrap-root", owner=holder.id)
        return holder.hash2(xor_mask(s_ag, holder.nonce), id_bytes(peer_id))
    nonce = holder.drone_records[peer_id].nonce
    return holder.hash2(xor_mask(r, nonce), id_bytes(peer_id))


def _generator_mint(gen: DroneState, profile: RoleProfile, peer_id: int, c: bytes) -> bytes:
    r = gen.puf_eval(c)
    s_g = gen.hash2(xor_mask(r, gen.nonce), id_bytes(gen.gss_slot.gss_id))
    observe.note("secret", s_g, what="d2g-secret", owner=gen.id)
    if profile.kind == "d2d":
        return gen.hash2(s_g, id_bytes(peer_id))
    return s_g


def _ensure_idle(ent, peer_id):
    if peer_id in ent.session_cache:
        raise SessionBusy(f"{ent.id} already has a session open with {peer_id}")


def _pick_base(chain: Chain, use_previous: bool) -> Epoch:
    if use_previous:
        if chain.previous is None:
            raise ProtocolError("no previous epoch to fall back to")
        return chain.previous
    return chain.current


def _settle(ent, peer_id, profile, role, initiator, chain, base, new, sk, m1, m2):
    chain.advance(base, new)
    observe.note("session_key", sk, owner=ent.id, peer=peer_id)
    out = SessionOutcome(peer_id, profile.kind, role, initiator, sk, new.index,
                         _transcript_hash(m1, m2))
    ent.pending[peer_id] = out
    return out


# holder-initiated MAKE


def make_holder_init(holder, profile: RoleProfile, peer_id: int, rng,
                     use_previous: bool = False) -> MakeM1:
    with holder.ledger.phase("make"):
        chain = chain_for(holder, profile, peer_id)
        _ensure_idle(holder, peer_id)
        if chain.current.x is None:
            raise ProtocolError(f"{holder.id} is not the holder for {peer_id}")
        base = _pick_base(chain, use_previous)
        s = xor_mask(base.x, _holder_pad(holder, profile, peer_id, base.c))
        c_star = random_block(rng)
        mask = holder.hash_tagged(s, 1)
        observe.note("pad", mask, what="mask1", owner=holder.id)
        x_star = xor_mask(c_star, mask)
        cred = holder.hash2(xor_mask(x_star, s), holder.id_bytes)
        m1 = MakeM1(holder.id, x_star, cred)
        holder.session_cache[peer_id] = {
            "role": "holder", "profile": profile.kind, "base": base,
            "s": s, "c_star": c_star, "m1": encode(m1),
        }
    return m1


def make_generator_respond(gen: DroneState, profile: RoleProfile, m1: MakeM1, rng):
    with gen.ledger.phase("make"):
        peer_id = m1.sender_id
        chain = chain_for(gen, profile, peer_id)
        _ensure_idle(gen, peer_id)
        if chain.current.x is not None:
            raise ProtocolError(f"{gen.id} is not the generator for {peer_id}")
        for base in chain.candidates():
            s = _generator_mint(gen, profile, peer_id, base.c)
            if ct_equal(gen.hash2(xor_mask(m1.x_star, s), id_bytes(peer_id)), m1.cred):
                break
        else:
            raise CredentialMismatch(f"M1 from {peer_id} failed at {gen.id}")
        c_star = xor_mask(m1.x_star, gen.hash_tagged(s, 1))
        c_new = random_block(rng)
        s_new = _generator_mint(gen, profile, peer_id, c_new)
        mask = gen.hash_tagged(s, 2)
        observe.note("pad", mask, what="mask2", owner=gen.id)
        x2 = xor_mask(s_new, mask)
        cred2 = gen.hash2(xor_mask(x2, s), c_star)
        sk = gen.hash2(c_star, s_new)
        observe.note("secret", s_new, what="shared", owner=gen.id)
        m2 = MakeM2(x2, cred2)
        out = _settle(gen, peer_id, profile, "generator", False, chain, base,
                      Epoch(c_new, None, base.index + 1), sk, encode(m1), encode(m2))
    return m2, out


def make_holder_complete(holder, profile: RoleProfile, peer_id: int, m2: MakeM2, rng=None):
    with holder.ledger.phase("make"):
        cache = holder.session_cache.get(peer_id)
        if cache is None or cache["role"] != "holder" or cache["profile"] != profile.kind \
                or "m2" in cache:
            raise NoSession(f"{holder.id} has no holder session with {peer_id}")
        s, c_star = cache["s"], cache["c_star"]
        if not ct_equal(holder.hash2(xor_mask(m2.x_star, s), c_star), m2.cred):
            holder.session_cache.pop(peer_id)
            raise CredentialMismatch(f"M2 from {peer_id} failed at {holder.id}")
        s_new = xor_mask(m2.x_star, holder.hash_tagged(s, 2))
        # D2D re-wraps under the exchanged challenge; the GSS draws a separate one
        c_next = c_star if profile.kind == "d2d" else random_block(rng or holder.rng)
        kappa = _holder_pad(holder, profile, peer_id, c_next)
        observe.note("pad", kappa, what="wrap", owner=holder.id)
        x_new = xor_mask(s_new, kappa)
        sk = holder.hash2(c_star, s_new)
        chain = chain_for(holder, profile, peer_id)
        base = cache["base"]
        holder.session_cache.pop(peer_id)
        return _settle(holder, peer_id, profile, "holder", True, chain, base,
                       Epoch(c_next, x_new, base.index + 1), sk, cache["m1"], encode(m2))


# generator-initiated MAKE


def make_generator_init(gen: DroneState, profile: RoleProfile, peer_id: int, rng,
                        use_previous: bool = False) -> MakeM1:
    with gen.ledger.phase("make"):
        chain = chain_for(gen, profile, peer_id)
        _ensure_idle(gen, peer_id)
        if chain.current.x is not None:
            raise ProtocolError(f"{gen.id} is not the generator for {peer_id}")
        base = _pick_base(chain, use_previous)
        s = _generator_mint(gen, profile, peer_id, base.c)
        c_new = random_block(rng)
        s_new = _generator_mint(gen, profile, peer_id, c_new)
        observe.note("secret", s_new, what="shared", owner=gen.id)
        mask = gen.hash_tagged(s, 1)
        observe.note("pad", mask, what="mask1", owner=gen.id)
        x_star = xor_mask(s_new, mask)
        cred = gen.hash2(xor_mask(x_star, s), gen.id_bytes)
        m1 = MakeM1(gen.id, x_star, cred)
        gen.session_cache[peer_id] = {
            "role": "generator", "profile": profile.kind, "base": base,
            "s": s, "s_new": s_new, "c_new": c_new, "m1": encode(m1),
        }
    return m1


def make_holder_respond(holder, profile: RoleProfile, m1: MakeM1, rng):
    with holder.ledger.phase("make"):
        peer_id = m1.sender_id
        chain = chain_for(holder, profile, peer_id)
        _ensure_idle(holder, peer_id)
        if chain.current.x is None:
            raise ProtocolError(f"{holder.id} is not the holder for {peer_id}")
        for base in chain.candidates():
            s = xor_mask(base.x, _holder_pad(holder, profile, peer_id, base.c))
            if ct_equal(holder.hash2(xor_mask(m1.x_star, s), id_bytes(peer_id)), m1.cred):
                break
        else:
            raise CredentialMismatch(f"M1 from {peer_id} failed at {holder.id}")
        s_new = xor_mask(m1.x_star, holder.hash_tagged(s, 1))
        c_star = random_block(rng)
        mask = holder.hash_tagged(s, 2)
        observe.note("pad", mask, what="mask2", owner=holder.id)
        x2 = xor_mask(c_star, mask)
        cred2 = holder.hash2(xor_mask(x2, s), s_new)
        c_next = c_star if profile.kind == "d2d" else random_block(rng)
        kappa = _holder_pad(holder, profile, peer_id, c_next)
        observe.note("pad", kappa, what="wrap", owner=holder.id)
        x_new = xor_mask(s_new, kappa)
        sk = holder.hash2(c_star, s_new)
        m2 = MakeM2(x2, cred2)
        out = _settle(holder, peer_id, profile, "holder", False, chain, base,
                      Epoch(c_next, x_new, base.index + 1), sk, encode(m1), encode(m2))
    return m2, out


def make_generator_complete(gen: DroneState, profile: RoleProfile, peer_id: int, m2: MakeM2):
    with gen.ledger.phase("make"):
        cache = gen.session_cache.get(peer_id)
        if cache is None or cache["role"] != "generator" or cache["profile"] != profile.kind:
            raise NoSession(f"{gen.id} has no generator session with {peer_id}")
        s, s_new = cache["s"], cache["s_new"]
        if not ct_equal(gen.hash2(xor_mask(m2.x_star, s), s_new), m2.cred):
            gen.session_cache.pop(peer_id)
            raise CredentialMismatch(f"M2 from {peer_id} failed at {gen.id}")
        c_star = xor_mask(m2.x_star, gen.hash_tagged(s, 2))
        sk = gen.hash2(c_star, s_new)
        chain = chain_for(gen, profile, peer_id)
        base = cache["base"]
        gen.session_cache.pop(peer_id)
        return _settle(gen, peer_id, profile, "generator", True, chain, base,
                       Epoch(cache["c_new"], None, base.index + 1), sk, cache["m1"], encode(m2))


def make_respond(ent, profile: RoleProfile, m1: MakeM1, rng):
    """Answer an M1 in whichever role this entity plays for the sender."""
    chain = chain_for(ent, profile, m1.sender_id)
    if chain.current.x is None:
        return make_generator_respond(ent, profile, m1, rng)
    return make_holder_respond(ent, profile, m1, rng)


def make_initiate(ent, profile: RoleProfile, peer_id: int, rng, use_previous=False) -> MakeM1:
    chain = chain_for(ent, profile, peer_id)
    if chain.current.x is None:
        return make_generator_init(ent, profile, peer_id, rng, use_previous)
    return make_holder_init(ent, profile, peer_id, rng, use_previous)


def make_complete(ent, profile: RoleProfile, peer_id: int, m2: MakeM2, rng=None):
    cache = ent.session_cache.get(peer_id)
    if cache is None:
        raise NoSession(f"{ent.id} has no session with {peer_id}")
    if cache["role"] == "holder":
        return make_holder_complete(ent, profile, peer_id, m2, rng)
    return make_generator_complete(ent, profile, peer_id, m2)


def profile_between(ent, peer_id: int) -> RoleProfile:
    if isinstance(ent, GssState):
        return D2G
    if ent.gss_slot is not None and ent.gss_slot.gss_id == peer_id:
        return D2G
    return D2D


# key confirmation (data phase)

_CONFIRM_LABEL = {True: b"key-confirm/initiator", False: b"key-confirm/responder"}


def confirm_message(ent, peer_id: int) -> KeyConfirm:
    out = ent.pending.get(peer_id)
    if out is None:
        raise NoSession(f"{ent.id} has nothing to confirm with {peer_id}")
    with ent.ledger.phase("data"):
        return KeyConfirm(ent.hash2(out.session_key, _CONFIRM_LABEL[out.initiator]))


def confirm_receive(ent, peer_id: int, msg: KeyConfirm) -> bool:
    """Check the peer's confirmation; commit the epoch on success, roll back on mismatch."""
    out = ent.pending.get(peer_id)
    if out is None:
        raise NoSession(f"{ent.id} has nothing to confirm with {peer_id}")
    with ent.ledger.phase("data"):
        expect = ent.hash2(out.session_key, _CONFIRM_LABEL[not out.initiator])
    chain = chain_for(ent, PROFILES[out.profile], peer_id)
    if not ct_equal(expect, msg.tag):
        chain.rollback()
        ent.pending.pop(peer_id, None)
        raise ConfirmMismatch(f"{ent.id} rejected confirmation from {peer_id}")
    chain.commit()
    return True


def key_confirm(initiator, responder) -> bool:
    """Run both confirmation messages directly between two parties."""
    i_peer = next(iter(initiator.pending))
    r_peer = next(iter(responder.pending))
    confirm_receive(responder, r_peer, confirm_message(initiator, i_peer))
    confirm_receive(initiator, i_peer, confirm_message(responder, r_peer))
    session_close(initiator, i_peer)
    session_close(responder, r_peer)
    return True


def session_close(ent, peer_id):
    """End of session or timeout: drop every transient value for the pair."""
    ent.session_cache.pop(peer_id, None)
    ent.pending.pop(peer_id, None)


# continuous RFFI at the GSS


def d2g_continuous_rffi(gss: GssState, envelope, claimed_id: int) -> bool:
    with gss.ledger.phase("make"):
        gss.ledger.record("rffi_check")
        ok = len(gss.rff_db) > 0 and classify(gss.rff_db, gss.classifier, envelope) == claimed_id
        if not ok:
            gss.ledger.record("rffi_reject")
    return ok


# over-the-air enrollment


def enroll_request(drone: DroneState, gss_id: int, rng) -> EnrollM1:
    with drone.ledger.phase("enrollment"):
        pk = drone.provisioned.get(gss_id)
        if pk is None:
            raise UnknownGss(f"drone {drone.id} holds no key for GSS {gss_id}")
        _ensure_idle(drone, ENROLL)
        c_a = random_block(rng)
        n_a = random_block(rng)
        r = drone.puf_eval(c_a)
        s_ag = drone.hash2(xor_mask(r, n_a), id_bytes(gss_id))
        observe.note("secret", s_ag, what="d2g-secret", owner=drone.id)
        e_ag = asym_encrypt(s_ag, pk, rng)
        drone.ledger.record("asym_enc")
        drone.session_cache[ENROLL] = {
            "c_a": c_a, "n_a": n_a, "s_ag": s_ag, "gss_id": gss_id, "gss_pk": pk,
            "committed": False,
        }
    return EnrollM1(drone.id, n_a, e_ag)


def enroll_process(gss: GssState, m1: EnrollM1, envelope, rng):
    """RFFI gate, then decrypt, fan out one EnrollM2 per enrolled peer, store the record.

    Returns the outgoing messages: EnrollM2s, or a single EnrollAck when the
    domain has no other enrolled drone.
    """
    with gss.ledger.phase("enrollment"):
        gss.ledger.record("rffi_check")
        who = classify(gss.rff_db, gss.classifier, envelope) if len(gss.rff_db) else ROGUE
        if who != m1.id_a:
            gss.ledger.record("rffi_reject")
            raise RogueSender(f"envelope classified as {who}, payload claims {m1.id_a}")
        gss.ledger.record("asym_dec")
        try:
            s_ag = asym_decrypt(m1.e_ag, gss.keys.private)
        except DecryptFailure as e:
            raise EnrollDecryptFailure(str(e)) from None
        id_a, n_a = m1.id_a, m1.n_a
        out = []
        for pid in sorted(gss.drone_records):
            if pid == id_a:
                continue
            rec = gss.drone_records[pid]
            cur = rec.chain.current
            kappa_gb = gss.hash2(xor_mask(gss.puf_eval(cur.c), rec.nonce), id_bytes(pid))
            s_bg = xor_mask(cur.x, kappa_gb)
            s_ba = gss.hash2(s_bg, id_bytes(id_a))
            observe.note("secret", s_ba, what="shared", owner=gss.id)
            kappa_ab = gss.hash2(xor_mask(s_ag, n_a), id_bytes(pid))
            observe.note("pad", kappa_ab, what="wrap", owner=gss.id)
            x_ba = xor_mask(s_ba, kappa_ab)
            cred = gss.hash2(xor_mask(x_ba, s_ag), id_bytes(pid))
            out.append(EnrollM2(x_ba, pid, cred))
        if not out:
            out.append(EnrollAck(gss.id, gss.hash2(s_ag, n_a)))
        c_ga = random_block(rng)
        kappa_ga = gss.hash2(xor_mask(gss.puf_eval(c_ga), n_a), id_bytes(id_a))
        observe.note("pad", kappa_ga, what="wrap", owner=gss.id)
        gss.drone_records[id_a] = DroneRecord(id_a, n_a, Chain(Epoch(c_ga, xor_mask(s_ag, kappa_ga))))
        gss.session_cache.pop(id_a, None)
        gss.pending.pop(id_a, None)
    return out


def _enroll_cache(drone):
    cache = drone.session_cache.get(ENROLL)
    if cache is None:
        raise NoSession(f"drone {drone.id} has no enrollment in progress")
    return cache


def _commit_enrollment(drone: DroneState, cache):
    if cache["committed"]:
        return
    drone.nonce = cache["n_a"]
    drone.gss_slot = GssSlot(cache["gss_id"], cache["gss_pk"], Chain(Epoch(cache["c_a"])))
    drone.peer_slots.clear()
    cache["committed"] = True


def enroll_complete(drone: DroneState, m2: EnrollM2) -> DroneState:
    cache = _enroll_cache(drone)
    with drone.ledger.phase("enrollment"):
        expect = drone.hash2(xor_mask(m2.x_ba, cache["s_ag"]), id_bytes(m2.id_b))
    if not ct_equal(expect, m2.cred_g) or m2.id_b in (drone.id, cache["gss_id"]):
        drone.session_cache.pop(ENROLL, None)
        raise EnrollAuthFailure(f"drone {drone.id} rejected EnrollM2 for peer {m2.id_b}")
    _commit_enrollment(drone, cache)
    drone.peer_slots[m2.id_b] = PeerSlot(m2.id_b, Chain(Epoch(cache["c_a"], m2.x_ba)))
    return drone


def enroll_ack(drone: DroneState, ack: EnrollAck) -> DroneState:
    cache = _enroll_cache(drone)
    with drone.ledger.phase("enrollment"):
        expect = drone.hash2(cache["s_ag"], cache["n_a"])
    if ack.id_g != cache["gss_id"] or not ct_equal(expect, ack.cred_g):
        drone.session_cache.pop(ENROLL, None)
        raise EnrollAuthFailure(f"drone {drone.id} rejected EnrollAck")
    _commit_enrollment(drone, cache)
    return drone


def enroll_close(drone: DroneState) -> bool:
    """End of the GSS's reply burst: forget the enrollment secrets. True if enrollment took effect."""
    cache = drone.session_cache.pop(ENROLL, None)
    # a missing cache means a reply failed verification and aborted the run
    return cache is not None and cache["committed"]
