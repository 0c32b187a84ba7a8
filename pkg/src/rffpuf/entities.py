"""Control server, ground station servers and drones: state and lifecycle."""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field

import numpy as np

from . import crypto
from .crypto import ID_BITS, AsymKeyPair
from .metrics import CostLedger
from .puf import PufDevice, puf_eval
from .rffi import (
    ClassifierConfig,
    Fingerprint,
    RffDatabase,
    calibrate_threshold,
    emit_sample,
    enroll,
)

log = logging.getLogger(__name__)

REGISTRATION_PACKETS = 100


class RegistrationError(ValueError):
    pass


@dataclass
class Epoch:
    """One generation of a per-pair chain: challenge, plus the wrapped secret on the holder side."""

    c: bytes
    x: bytes | None = None
    index: int = 0


@dataclass
class Chain:
    current: Epoch
    previous: Epoch | None = None

    def candidates(self):
        yield self.current
        if self.previous is not None:
            yield self.previous

    def advance(self, base: Epoch, new: Epoch):
        self.previous = base
        self.current = new

    def commit(self):
        self.previous = None

    def rollback(self):
        if self.previous is not None:
            self.current, self.previous = self.previous, None


@dataclass
class PeerSlot:
    peer_id: int
    chain: Chain

    @property
    def is_holder(self) -> bool:
        return self.chain.current.x is not None


@dataclass
class GssSlot:
    gss_id: int
    gss_pk: bytes
    chain: Chain


@dataclass
class DroneRecord:
    """What a GSS keeps per enrolled drone: {ID, C_G*, n, X_*G}."""

    drone_id: int
    nonce: bytes
    chain: Chain


class _Counted:
    """Ledgered access to the primitives an entity evaluates itself."""

    ledger: CostLedger
    puf: PufDevice

    def hash2(self, x: bytes, y: bytes) -> bytes:
        self.ledger.record("hash")
        return crypto.hash2(x, y)

    def hash_tagged(self, s: bytes, tag: int) -> bytes:
        self.ledger.record("hash")
        return crypto.hash_tagged(s, tag)

    def puf_eval(self, c: bytes) -> bytes:
        self.ledger.record("puf")
        return puf_eval(self.puf, c)


@dataclass(eq=False)
class DroneState(_Counted):
    id: int
    puf: PufDevice
    fingerprint: Fingerprint
    rng: random.Random = field(repr=False)
    ledger: CostLedger = None
    provisioned: dict = field(default_factory=dict)  # gss id -> pk, read-only memory
    nonce: bytes | None = None
    gss_slot: GssSlot | None = None
    peer_slots: dict = field(default_factory=dict)
    session_cache: dict = field(default_factory=dict, repr=False)
    pending: dict = field(default_factory=dict, repr=False)
    registered: bool = False

    def __post_init__(self):
        if self.ledger is None:
            self.ledger = CostLedger(owner=f"drone:{self.id}")

    @property
    def id_bytes(self) -> bytes:
        return crypto.id_bytes(self.id)


@dataclass(eq=False)
class GssState(_Counted):
    id: int
    domain: str
    keys: AsymKeyPair = field(repr=False)
    puf: PufDevice = None
    fingerprint: Fingerprint = None
    rng: random.Random = field(default=None, repr=False)
    ledger: CostLedger = None
    rff_db: RffDatabase = field(default_factory=RffDatabase, repr=False)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    drone_records: dict = field(default_factory=dict)
    session_cache: dict = field(default_factory=dict, repr=False)
    pending: dict = field(default_factory=dict, repr=False)
    continuous_rffi: bool = False

    def __post_init__(self):
        if self.ledger is None:
            self.ledger = CostLedger(owner=f"gss:{self.id}")

    @property
    def id_bytes(self) -> bytes:
        return crypto.id_bytes(self.id)


@dataclass
class CsState:
    rng: random.Random = field(repr=False)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    threshold_percentile: float = 99.0
    rff_db: RffDatabase = field(default_factory=RffDatabase, repr=False)
    gss_registry: dict = field(default_factory=dict)  # gss id -> public key
    domain_directory: dict = field(default_factory=dict)  # domain -> gss id
    ledger: CostLedger = field(default_factory=lambda: CostLedger(owner="cs"))

    @property
    def drone_registry(self):
        return self.rff_db.entries

    def taken(self, ident: int) -> bool:
        return ident in self.rff_db or ident in self.gss_registry


@dataclass
class RegistrationChannel:
    """Wired-up link inside the secure registration facility."""

    noise_sigma: float
    rng: np.random.Generator
    secure: bool = True

    def emit(self, drone: DroneState):
        return emit_sample(drone.fingerprint, self.noise_sigma, self.rng, emitted_by=drone.id)


def cs_register_drone(cs: CsState, drone: DroneState, channel: RegistrationChannel,
                      packets: int = REGISTRATION_PACKETS) -> CsState:
    if not channel.secure:
        raise RegistrationError("drone registration requires the secure environment")
    if cs.taken(drone.id):
        raise RegistrationError(f"id {drone.id} is already registered")
    samples = [channel.emit(drone) for _ in range(packets)]
    cs.rff_db = enroll(cs.rff_db, drone.id, samples)
    cs.classifier = calibrate_threshold(cs.rff_db, cs.classifier, cs.threshold_percentile)
    drone.registered = True
    return cs


def cs_register_gss(cs: CsState, gss_id: int, domain: str, *, puf: PufDevice,
                    fingerprint: Fingerprint, rng: random.Random) -> tuple[GssState, CsState]:
    if cs.taken(gss_id):
        raise RegistrationError(f"id {gss_id} is already registered")
    if domain in cs.domain_directory:
        raise RegistrationError(f"domain {domain!r} already has a GSS")
    keys = crypto.asym_keygen(cs.rng)
    gss = GssState(id=gss_id, domain=domain, keys=keys, puf=puf, fingerprint=fingerprint, rng=rng,
                   classifier=cs.classifier)
    cs.gss_registry[gss_id] = keys.public
    cs.domain_directory[domain] = gss_id
    return gss, cs


def cs_provision_drone(cs: CsState, drone: DroneState, domain: str,
                       relay: GssState | None = None) -> DroneState:
    """Give the drone the id and public key of a domain's GSS, optionally relayed by its current GSS."""
    if drone.id not in cs.rff_db:
        raise RegistrationError(f"drone {drone.id} is not registered")
    if domain not in cs.domain_directory:
        raise RegistrationError(f"unknown domain {domain!r}")
    if relay is not None and relay.id not in cs.gss_registry:
        raise RegistrationError(f"relay {relay.id} is not a registered GSS")
    gss_id = cs.domain_directory[domain]
    drone.provisioned[gss_id] = cs.gss_registry[gss_id]
    return drone


def cs_propagate_rff(cs: CsState, gss: GssState, drone_id: int) -> GssState:
    if drone_id not in cs.rff_db:
        raise RegistrationError(f"drone {drone_id} is not registered")
    gss.rff_db = RffDatabase({**gss.rff_db.entries, drone_id: cs.rff_db.entries[drone_id]})
    gss.classifier = cs.classifier
    return gss


def notify_join(peer: DroneState, new_id: int):
    """GSS notice to an enrolled drone that `new_id` now holds a wrapped secret minted from its chain.

    The peer starts a per-pair chain from its current D2G challenge (and the
    retained previous one, if any).
    """
    slot = peer.gss_slot
    if slot is None:
        raise RegistrationError(f"drone {peer.id} is not enrolled")
    prev = slot.chain.previous
    peer.peer_slots[new_id] = PeerSlot(
        new_id,
        Chain(Epoch(slot.chain.current.c), Epoch(prev.c) if prev is not None else None),
    )


def drone_leave(drone: DroneState, gss: GssState, broadcast=()) -> bool:
    """Drop every trace of the drone from its domain. Returns False when it was not enrolled."""
    if drone.id not in gss.drone_records:
        log.warning("drone %d is not enrolled at GSS %d; leave ignored", drone.id, gss.id)
        return False
    del gss.drone_records[drone.id]
    gss.rff_db = gss.rff_db.without(drone.id)
    gss.session_cache.pop(drone.id, None)
    gss.pending.pop(drone.id, None)
    for peer in broadcast:
        if peer.id != drone.id:
            peer.peer_slots.pop(drone.id, None)
            peer.session_cache.pop(drone.id, None)
            peer.pending.pop(drone.id, None)
    drone.nonce = None
    drone.gss_slot = None
    drone.peer_slots.clear()
    drone.session_cache.clear()
    drone.pending.clear()
    return True


# storage accounting


def d2d_storage_bits(drone: DroneState, peer_id: int) -> int:
    """own id + GSS id + nonce + {peer id, challenge, wrapped secret if held}."""
    slot = drone.peer_slots[peer_id]
    bits = ID_BITS + ID_BITS + 8 * len(drone.nonce) + ID_BITS + 8 * len(slot.chain.current.c)
    if slot.chain.current.x is not None:
        bits += 8 * len(slot.chain.current.x)
    return bits


def d2g_storage_bits(drone: DroneState, gss: GssState) -> dict:
    """Drone side and GSS side counts for the D2G link (reported, not gated)."""
    slot = drone.gss_slot
    drone_bits = ID_BITS + ID_BITS + 8 * len(drone.nonce) + 8 * len(slot.chain.current.c)
    rec = gss.drone_records[drone.id]
    cur = rec.chain.current
    return {
        "drone": drone_bits,
        "drone_with_gss_pk": drone_bits + 8 * len(slot.gss_pk),
        "gss_record": ID_BITS + 8 * (len(cur.c) + len(rec.nonce) + len(cur.x)),
    }


# snapshots


def _epoch_json(e: Epoch | None):
    if e is None:
        return None
    return {"c": e.c.hex(), "x": e.x.hex() if e.x is not None else None, "index": e.index}


def _chain_json(ch: Chain):
    return {"current": _epoch_json(ch.current), "previous": _epoch_json(ch.previous)}


def drone_snapshot(drone: DroneState) -> dict:
    slot = drone.gss_slot
    return {
        "id": drone.id,
        "nonce": drone.nonce.hex() if drone.nonce else None,
        "gss_slot": None if slot is None else {
            "gss_id": slot.gss_id, "gss_pk": slot.gss_pk.hex(), **_chain_json(slot.chain)},
        "peer_slots": [
            {"peer_id": pid, **_chain_json(s.chain)} for pid, s in sorted(drone.peer_slots.items())
        ],
        "provisioned": {str(k): v.hex() for k, v in sorted(drone.provisioned.items())},
    }


def gss_snapshot(gss: GssState, include_private: bool = True) -> dict:
    out = {
        "id": gss.id,
        "domain": gss.domain,
        "public_key": gss.keys.public.hex(),
        "drone_records": [
            {"drone_id": r.drone_id, "nonce": r.nonce.hex(), **_chain_json(r.chain)}
            for _, r in sorted(gss.drone_records.items())
        ],
    }
    if include_private:
        out["private_key"] = gss.keys.private.hex()
    return out


def _hexify(obj):
    if isinstance(obj, (bytes, bytearray)):
        return obj.hex()
    if isinstance(obj, dict):
        return {str(k): _hexify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_hexify(v) for v in obj]
    if hasattr(obj, "__dataclass_fields__"):
        return {k: _hexify(getattr(obj, k)) for k in obj.__dataclass_fields__}
    return obj


def drone_dump(drone: DroneState) -> dict:
    """Everything the drone holds, including transient session state."""
    out = drone_snapshot(drone)
    out["session_cache"] = _hexify(drone.session_cache)
    out["pending"] = _hexify(drone.pending)
    return out
