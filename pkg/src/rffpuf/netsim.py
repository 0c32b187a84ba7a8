"""Deterministic simulated wireless channel, scripted adversary and scenario runner.

Every frame carries an envelope: an RF fingerprint sample that the channel
draws from the fingerprint of whoever actually transmitted it. Header fields
(claimed source, destination) are free for the adversary to forge; the
envelope is not.
"""

from __future__ import annotations

import copy
import hashlib
import json
import random
from collections import deque
from dataclasses import dataclass, field, fields, is_dataclass

import numpy as np

from . import observe, protocol
from .crypto import AsymKeyPair
from .entities import (
    CsState,
    DroneState,
    GssState,
    RegistrationChannel,
    cs_propagate_rff,
    cs_provision_drone,
    cs_register_drone,
    cs_register_gss,
    d2d_storage_bits,
    d2g_storage_bits,
    drone_leave,
    notify_join,
)
from .messages import (
    _WIRE_BYTES,
    ID,
    MESSAGE_TYPES,
    MalformedMessage,
    accounted_bits,
    decode,
    encode,
    field_bytes,
    field_offsets,
    flip_bits,
)
from .metrics import CostLedger, report
from .puf import PufDevice, puf_new
from .rffi import ClassifierConfig, Fingerprint, RffSample, emit_sample, transmitter_new
from .symbolic import KnowledgeBase, Tracer, knowledge_closure

SCHEMA = 1
ADVERSARY = "adversary"
ENROLL_ATTEMPTS = 3

_PHASE_OF = {
    "EnrollM1": "enrollment", "EnrollM2": "enrollment", "EnrollAck": "enrollment",
    "MakeM1": "make", "MakeM2": "make", "KeyConfirm": "data",
}
_STEP_OPS = ("enroll", "make", "leave", "provision", "capture", "replay", "inject")
_RULE_ACTIONS = ("drop", "modify")


class ConfigError(ValueError):
    pass


class ScriptError(RuntimeError):
    pass


# configuration

DEFAULTS = {
    "schema": SCHEMA,
    "seed": 0,
    "rffi": {"dim": 64, "k": 5, "noise": 0.05, "threshold_percentile": 99.0, "packets": 100},
    "puf": {"noise_sigma": 0.0},
    "continuous_rffi": False,
    "rotate_on_join": True,
    "trace": False,
    "domains": [],
    "drones": [],
    "sessions": [],
    "adversary": [],
}


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from None
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror}") from None


def load_config(path) -> dict:
    return validate_config(read_json(path))


def validate_config(raw: dict) -> dict:
    """Fill defaults and check every reference. Errors name the offending entry."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - set(DEFAULTS) - {"name", "description"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = copy.deepcopy(DEFAULTS)
    for key, val in raw.items():
        if isinstance(cfg.get(key), dict):
            extra = set(val) - set(cfg[key])
            if extra:
                raise ConfigError(f"{key}: unknown keys {sorted(extra)}")
            cfg[key].update(val)
        else:
            cfg[key] = copy.deepcopy(val)
    if cfg["schema"] != SCHEMA:
        raise ConfigError(f"schema {cfg['schema']!r} is not supported (expected {SCHEMA})")

    domains = {}
    ids = set()
    for i, d in enumerate(cfg["domains"]):
        where = f"domains[{i}]"
        if not isinstance(d.get("name"), str) or not isinstance(d.get("gss"), int):
            raise ConfigError(f"{where}: needs a string 'name' and an integer 'gss'")
        if d["name"] in domains:
            raise ConfigError(f"{where}: duplicate domain {d['name']!r}")
        if d["gss"] in ids:
            raise ConfigError(f"{where}: duplicate id {d['gss']}")
        domains[d["name"]] = d["gss"]
        ids.add(d["gss"])
    gss_ids = set(domains.values())
    drone_ids = set()
    for i, d in enumerate(cfg["drones"]):
        where = f"drones[{i}]"
        if not isinstance(d.get("id"), int) or not 0 <= d["id"] < 2**32:
            raise ConfigError(f"{where}: 'id' must be a 32-bit unsigned integer")
        if d["id"] in ids:
            raise ConfigError(f"{where}: duplicate id {d['id']}")
        if d.get("domain") not in domains:
            raise ConfigError(f"{where}: unknown domain {d.get('domain')!r}")
        ids.add(d["id"])
        drone_ids.add(d["id"])

    def need(where, ident, pool, what):
        if ident not in pool:
            raise ConfigError(f"{where}: unknown {what} {ident!r}")

    for i, st in enumerate(cfg["sessions"]):
        where = f"sessions[{i}]"
        op = st.get("op")
        if op not in _STEP_OPS:
            raise ConfigError(f"{where}: unknown op {op!r}")
        if op in ("enroll", "leave", "provision"):
            need(where, st.get("drone"), drone_ids, "drone")
            if "domain" in st:
                need(where, st["domain"], domains, "domain")
        elif op == "make":
            pair = st.get("pair")
            if not (isinstance(pair, list) and len(pair) == 2):
                raise ConfigError(f"{where}: 'pair' must list two ids")
            for p in pair:
                need(where, p, ids, "entity")
            if pair[0] == pair[1] or (pair[0] in gss_ids and pair[1] in gss_ids):
                raise ConfigError(f"{where}: a session needs a drone and a distinct peer")
            if st.get("direction", "forward") not in ("forward", "reverse", "alternate"):
                raise ConfigError(f"{where}: direction must be forward, reverse or alternate")
            if "initiator" in st:
                need(where, st["initiator"], set(pair), "initiator")
            if not isinstance(st.get("count", 1), int) or st.get("count", 1) < 1:
                raise ConfigError(f"{where}: count must be a positive integer")
        elif op == "capture":
            need(where, st.get("entity"), ids, "entity")
        elif op in ("replay", "inject"):
            if op == "inject" and st.get("msg_type") not in MESSAGE_TYPES:
                raise ConfigError(f"{where}: unknown msg_type {st.get('msg_type')!r}")
            if op == "replay":
                _check_match(where, st.get("match"))
            if "to" in st:
                need(where, st["to"], ids, "entity")
        for j, rule in enumerate(st.get("adversary", [])):
            _check_rule(f"{where}.adversary[{j}]", rule)
        if st.get("expect", "ok") not in ("ok", "failed", "rejected", "accepted", "holds", "broken"):
            raise ConfigError(f"{where}: unknown expectation {st.get('expect')!r}")
    for i, rule in enumerate(cfg["adversary"]):
        _check_rule(f"adversary[{i}]", rule)
    return cfg


def _check_rule(where, rule):
    if rule.get("action") not in _RULE_ACTIONS:
        raise ConfigError(f"{where}: action must be one of {_RULE_ACTIONS}")
    _check_match(where, rule.get("match"))
    if rule["action"] == "modify":
        mt = rule["match"].get("msg_type")
        if mt is None or rule.get("field") not in field_offsets(mt):
            raise ConfigError(f"{where}: modify needs match.msg_type and one of its fields")


def _check_match(where, match):
    if not isinstance(match, dict) or not ({"seq"} <= set(match) or {"msg_type"} <= set(match)):
        raise ConfigError(f"{where}: match needs 'seq' or 'msg_type' (with optional 'nth')")
    if "msg_type" in match and match["msg_type"] not in MESSAGE_TYPES:
        raise ConfigError(f"{where}: unknown msg_type {match['msg_type']!r}")


# frames and the channel


@dataclass(frozen=True)
class Frame:
    seq: int
    time: int
    session_id: str
    phase: str
    src: int
    dst: int
    msg_type: str
    payload: bytes
    envelope: RffSample = field(repr=False)
    emitter: str = ""

    @property
    def bits(self) -> int:
        return accounted_bits(MESSAGE_TYPES[self.msg_type])


@dataclass
class Adversary:
    fingerprint: Fingerprint
    rng: random.Random
    ledger: CostLedger = field(default_factory=lambda: CostLedger(owner=ADVERSARY))
    observed: list = field(default_factory=list)
    rules: list = field(default_factory=list)
    captures: list = field(default_factory=list)


def _label(ent) -> str:
    if isinstance(ent, GssState):
        return f"gss:{ent.id}"
    if isinstance(ent, DroneState):
        return f"drone:{ent.id}"
    return ADVERSARY


def _collect_bytes(obj, out, skip=(PufDevice, Fingerprint, CostLedger, random.Random)):
    if isinstance(obj, (bytes, bytearray)):
        out.append(bytes(obj))
    elif isinstance(obj, skip) or obj is None:
        return
    elif isinstance(obj, AsymKeyPair):
        out.extend([obj.public, obj.private])
    elif isinstance(obj, dict):
        for v in obj.values():
            _collect_bytes(v, out, skip)
    elif isinstance(obj, (list, tuple)):
        for v in obj:
            _collect_bytes(v, out, skip)
    elif is_dataclass(obj):
        for f in fields(obj):
            if f.name in ("rff_db", "classifier", "rng", "ledger"):
                continue
            _collect_bytes(getattr(obj, f.name), out, skip)


class Simulator:
    def __init__(self, config: dict, seed: int | None = None):
        self.config = validate_config(config)
        self.seed = self.config["seed"] if seed is None else seed
        rf = self.config["rffi"]
        self.noise = float(rf["noise"])
        self.channel_rng = np.random.default_rng([self.seed, 0xC4A])
        self.recorder = observe.Recorder()
        self.tracer = Tracer() if self._needs_trace() else None
        self.log: list[dict] = []
        self.frames: list[Frame] = []
        self.queue: deque = deque()
        self.seq = 0
        self.session_no = 0
        self.make_sessions: list[dict] = []
        self.session_keys: list[dict] = []
        self.rejections: list[dict] = []
        self.steps: list[dict] = []
        self.envelope_violations = 0
        self._attempt = None
        self._enroll = None
        self.adversary = Adversary(
            transmitter_new(_seed_int(self.seed, "adversary"), rf["dim"]),
            random.Random(f"{self.seed}:adversary"),
            rules=[dict(r, fired=0) for r in self.config["adversary"]],
        )
        with self._observing():
            self._build()

    def _needs_trace(self):
        return bool(self.config["trace"]) or any(
            s["op"] == "capture" for s in self.config["sessions"])

    def _observing(self):
        stack = _Stack()
        stack.enter(observe.recording(self.recorder))
        if self.tracer is not None:
            stack.enter(observe.tracing(self.tracer))
        return stack

    # setup

    def _build(self):
        cfg = self.config
        rf = cfg["rffi"]
        self.cs = CsState(rng=random.Random(f"{self.seed}:cs"),
                          classifier=ClassifierConfig(k=rf["k"]),
                          threshold_percentile=rf["threshold_percentile"])
        reg = RegistrationChannel(self.noise, np.random.default_rng([self.seed, 0x8E6]))
        sigma = float(cfg["puf"]["noise_sigma"])
        self.drones: dict[int, DroneState] = {}
        self.gss: dict[int, GssState] = {}
        self.domain_of: dict[int, str] = {}
        for d in cfg["drones"]:
            i = d["id"]
            drone = DroneState(i, puf_new(_seed_int(self.seed, f"puf:{i}"), sigma),
                               transmitter_new(_seed_int(self.seed, f"rf:{i}"), rf["dim"]),
                               random.Random(f"{self.seed}:{i}"))
            cs_register_drone(self.cs, drone, reg, rf["packets"])
            self.drones[i] = drone
            self.domain_of[i] = d["domain"]
        for dom in cfg["domains"]:
            g = dom["gss"]
            gss, self.cs = cs_register_gss(
                self.cs, g, dom["name"],
                puf=puf_new(_seed_int(self.seed, f"puf:{g}"), sigma),
                fingerprint=transmitter_new(_seed_int(self.seed, f"rf:{g}"), rf["dim"]),
                rng=random.Random(f"{self.seed}:{g}"))
            gss.continuous_rffi = bool(cfg["continuous_rffi"])
            self.gss[g] = gss
        for i, drone in self.drones.items():
            g = self.cs.domain_directory[self.domain_of[i]]
            cs_provision_drone(self.cs, drone, self.domain_of[i])
            cs_propagate_rff(self.cs, self.gss[g], i)
        for gss in self.gss.values():
            gss.classifier = self.cs.classifier

    def entity(self, ident):
        ent = self.drones.get(ident) or self.gss.get(ident)
        if ent is None:
            raise ScriptError(f"no entity {ident}")
        return ent

    def ledgers(self) -> dict:
        out = {_label(e): e.ledger for e in [*self.drones.values(), *self.gss.values()]}
        out["cs"] = self.cs.ledger
        out[ADVERSARY] = self.adversary.ledger
        return out

    # channel

    def _event(self, kind, **data):
        rec = {"event": kind, **data}
        self.log.append(rec)
        return rec

    def _frame_record(self, fr: Frame, msg=None):
        msg = msg if msg is not None else _try_decode(fr)
        return {
            "seq": fr.seq, "time": fr.time, "session_id": fr.session_id, "phase": fr.phase,
            "src": fr.src, "dst": fr.dst, "msg_type": fr.msg_type, "bits": fr.bits,
            "emitter": fr.emitter,
            "fields": {k: v.hex() for k, v in field_bytes(msg).items()} if msg is not None
            else {"raw": fr.payload.hex()},
        }

    def _emit(self, emitter, src, dst, msg_type, payload, phase, session_id):
        """Put one frame on the air. The envelope always comes from the real transmitter."""
        self.seq += 1
        fp = self.adversary.fingerprint if emitter is self.adversary else emitter.fingerprint
        env = emit_sample(fp, self.noise, self.channel_rng,
                          emitted_by=None if emitter is self.adversary else emitter.id)
        fr = Frame(self.seq, self.seq, session_id, phase, src, dst, msg_type, payload, env,
                   _label(emitter))
        emitter.ledger.sent(fr.bits, phase)
        self.frames.append(fr)
        self.adversary.observed.append(fr)
        self._event("send", **self._frame_record(fr))
        return fr

    def send(self, sender, dst, msg, phase, session_id):
        fr = self._emit(sender, sender.id, dst, type(msg).__name__, encode(msg), phase, session_id)
        self._intercept(fr)

    def adversary_send(self, src, dst, msg_type, payload, session_id="adv"):
        fr = self._emit(self.adversary, src, dst, msg_type, payload, _PHASE_OF[msg_type], session_id)
        self.queue.append(fr)
        return fr

    def _intercept(self, fr: Frame):
        for rule in self.adversary.rules:
            if not _matches(rule, fr, self.frames):
                continue
            rule["fired"] += 1
            self._event("drop", seq=fr.seq, by=rule["action"])
            if rule["action"] == "modify":
                lo, _ = field_offsets(fr.msg_type)[rule["field"]]
                payload = flip_bits(fr.payload, [lo + b for b in rule.get("bits", [0])])
                self.adversary_send(fr.src, fr.dst, fr.msg_type, payload, fr.session_id)
            return
        self.queue.append(fr)

    def pump(self):
        while self.queue:
            self._deliver(self.queue.popleft())

    def _deliver(self, fr: Frame):
        rx = self.drones.get(fr.dst) or self.gss.get(fr.dst)
        if rx is None:
            self._event("undeliverable", seq=fr.seq, dst=fr.dst)
            return
        if fr.envelope.emitted_by != (None if fr.emitter == ADVERSARY else int(fr.emitter.split(":")[1])):
            self.envelope_violations += 1
        rx.ledger.received(fr.bits, fr.phase)
        snap = rx.ledger.snapshot()
        try:
            msg = decode(fr.msg_type, fr.payload)
            self._dispatch(rx, fr, msg)
        except (protocol.ProtocolError, MalformedMessage) as e:
            cost = rx.ledger.since(snap)
            rej = {
                "seq": fr.seq, "at": rx.id, "msg_type": fr.msg_type, "emitter": fr.emitter,
                "reason": getattr(e, "reason", "malformed"), "detail": str(e),
                "cost": {k: cost[k] for k in ("puf", "hash", "asym_enc", "asym_dec", "bits_sent",
                                              "rffi_check")},
            }
            self.rejections.append(rej)
            self._event("reject", **rej)

    # receive side

    def _dispatch(self, rx, fr: Frame, msg):
        t = fr.msg_type
        if isinstance(rx, GssState) and rx.continuous_rffi and t in ("MakeM1", "MakeM2", "KeyConfirm"):
            if not protocol.d2g_continuous_rffi(rx, fr.envelope, fr.src):
                raise protocol.RogueSender(f"continuous RFFI rejected frame claiming {fr.src}")
        if t == "EnrollM1":
            if not isinstance(rx, GssState):
                raise protocol.ProtocolError("enrollment requests go to a GSS")
            out = protocol.enroll_process(rx, msg, fr.envelope, rx.rng)
            notified = []
            for m in out:
                if type(m).__name__ == "EnrollM2":
                    peer = self.drones.get(m.id_b)
                    if peer is not None and peer.gss_slot is not None:
                        notify_join(peer, msg.id_a)
                        notified.append(m.id_b)
                        self._event("notice", gss=rx.id, to=m.id_b, joined=msg.id_a)
            if self._enroll is not None and self._enroll["drone"] == msg.id_a:
                self._enroll["notified"] = notified
            for m in out:
                self.send(rx, fr.src, m, "enrollment", fr.session_id)
        elif t == "EnrollM2":
            protocol.enroll_complete(rx, msg)
        elif t == "EnrollAck":
            protocol.enroll_ack(rx, msg)
        elif t == "MakeM1":
            prof = protocol.profile_between(rx, msg.sender_id)
            m2, out = protocol.make_respond(rx, prof, msg, rx.rng)
            if self._attempt is not None and self._attempt["responder"] == rx.id:
                self._attempt["outcome_r"] = out
            self.send(rx, msg.sender_id, m2, "make", fr.session_id)
        elif t == "MakeM2":
            prof = protocol.profile_between(rx, fr.src)
            out = protocol.make_complete(rx, prof, fr.src, msg, rx.rng)
            if self._attempt is not None and self._attempt["initiator"] == rx.id:
                self._attempt["outcome_i"] = out
            self.send(rx, fr.src, protocol.confirm_message(rx, fr.src), "data", fr.session_id)
        elif t == "KeyConfirm":
            out = rx.pending.get(fr.src)
            protocol.confirm_receive(rx, fr.src, msg)
            if out is not None and not out.initiator:
                self.send(rx, fr.src, protocol.confirm_message(rx, fr.src), "data", fr.session_id)
            elif self._attempt is not None and self._attempt["initiator"] == rx.id:
                self._attempt["confirmed"] = True
            protocol.session_close(rx, fr.src)

    # scripted operations

    def _next_session(self, kind):
        self.session_no += 1
        return f"{kind}-{self.session_no}"

    def enroll(self, drone_id: int, domain: str | None = None) -> bool:
        drone = self.drones[drone_id]
        domain = domain or self.domain_of[drone_id]
        gss_id = self.cs.domain_directory[domain]
        ok = False
        for attempt in range(ENROLL_ATTEMPTS):
            sid = self._next_session("enroll")
            self._enroll = {"drone": drone_id, "notified": []}
            try:
                m1 = protocol.enroll_request(drone, gss_id, drone.rng)
            except protocol.ProtocolError as e:
                self._event("error", session_id=sid, reason=e.reason, detail=str(e))
                break
            self.send(drone, gss_id, m1, "enrollment", sid)
            self.pump()
            ok = protocol.enroll_close(drone) and drone.gss_slot is not None \
                and drone.gss_slot.gss_id == gss_id and drone_id in self.gss[gss_id].drone_records
            self._event("enrolled" if ok else "enroll-failed", session_id=sid, drone=drone_id,
                        gss=gss_id, attempt=attempt + 1)
            if ok:
                break
        notified = self._enroll["notified"] if ok else []
        self._enroll = None
        if ok:
            self.domain_of[drone_id] = domain
            if self.config["rotate_on_join"]:
                # Every fresh per-pair slot starts on a challenge that also seeds a D2G
                # chain; move all of them forward before anything can be captured.
                for peer in notified:
                    self.make(drone, peer, rotation=True)
                for d in [drone_id, *notified]:
                    self.make(self.gss[gss_id], d, rotation=True)
        return ok

    def make(self, initiator, peer_id: int, rotation: bool = False) -> bool:
        if isinstance(initiator, int):
            initiator = self.entity(initiator)
        ok, rec = self._make_attempt(initiator, peer_id, False, rotation)
        if not ok and rec["retry"]:
            ok, _ = self._make_attempt(initiator, peer_id, True, rotation)
        return ok

    def _make_attempt(self, ini, peer_id, use_previous, rotation):
        resp = self.entity(peer_id)
        sid = self._next_session("make")
        try:
            prof = protocol.profile_between(ini, peer_id)
            chain = protocol.chain_for(ini, prof, peer_id)
        except protocol.ProtocolError as e:
            self._event("error", session_id=sid, reason=e.reason, detail=str(e))
            return False, {"retry": False}
        holder = ini if chain.current.x is not None else resp
        # a retained epoch on either side means the responder may have to try two
        resync = use_previous or chain.previous is not None or _has_previous(resp, ini.id)
        snap_i, snap_r = ini.ledger.snapshot(), resp.ledger.snapshot()
        self._attempt = {"initiator": ini.id, "responder": peer_id, "outcome_i": None,
                         "outcome_r": None, "confirmed": False}
        try:
            m1 = protocol.make_initiate(ini, prof, peer_id, ini.rng, use_previous)
        except protocol.ProtocolError as e:
            self._event("error", session_id=sid, reason=e.reason, detail=str(e))
            self._attempt = None
            return False, {"retry": False}
        self.send(ini, peer_id, m1, "make", sid)
        self.pump()
        att, self._attempt = self._attempt, None
        o_i, o_r = att["outcome_i"], att["outcome_r"]
        ok = att["confirmed"] and o_i is not None and o_r is not None \
            and o_i.session_key == o_r.session_key
        protocol.session_close(ini, peer_id)
        protocol.session_close(resp, ini.id)
        d_i, d_r = ini.ledger.since(snap_i, "make"), resp.ledger.since(snap_r, "make")
        d_h, d_g = (d_i, d_r) if holder is ini else (d_r, d_i)
        rec = {
            "session_id": sid, "profile": prof.kind, "initiator": ini.id, "responder": peer_id,
            "initiator_role": "holder" if holder is ini else "generator",
            "rotation": rotation, "use_previous": use_previous, "resync": resync, "ok": ok,
            "messages": d_i["msg_sent"] + d_r["msg_sent"],
            "initiator_bits": d_i["bits_sent"], "responder_bits": d_r["bits_sent"],
            "holder_ops": {k: d_h[k] for k in ("puf", "hash")},
            "generator_ops": {k: d_g[k] for k in ("puf", "hash")},
            "retry": (not ok and not use_previous and o_r is None
                      and protocol.chain_for(ini, prof, peer_id).previous is not None),
        }
        self.make_sessions.append(rec)
        self._event("session", **{k: v for k, v in rec.items() if k != "retry"})
        if ok:
            self.session_keys.append({
                "session_id": sid, "pair": sorted([ini.id, peer_id]), "profile": prof.kind,
                "key": o_i.session_key, "time": self.seq,
            })
        return ok, rec

    def leave(self, drone_id: int) -> bool:
        drone = self.drones[drone_id]
        slot = drone.gss_slot
        if slot is None:
            self._event("leave-ignored", drone=drone_id)
            return False
        gss = self.gss[slot.gss_id]
        peers = [d for d in self.drones.values() if d.gss_slot and d.gss_slot.gss_id == gss.id]
        ok = drone_leave(drone, gss, peers)
        self._event("left", drone=drone_id, gss=gss.id)
        return ok

    def provision(self, drone_id: int, domain: str, relay: bool = True) -> bool:
        drone = self.drones[drone_id]
        gss_id = self.cs.domain_directory[domain]
        via = self.gss.get(self.cs.domain_directory[self.domain_of[drone_id]]) if relay else None
        cs_provision_drone(self.cs, drone, domain, relay=via)
        cs_propagate_rff(self.cs, self.gss[gss_id], drone_id)
        self._event("provisioned", drone=drone_id, domain=domain, relay=via.id if via else None)
        return True

    def capture(self, ident: int, puf_oracle: bool, label: str = "") -> dict:
        ent = self.entity(ident)
        values = []
        _collect_bytes(ent, values)
        cap = {
            "label": label or f"capture-{len(self.adversary.captures) + 1}",
            "entity": ident, "puf_oracle": puf_oracle, "time": self.seq,
            "values": values, "device": ent.puf.device_seed,
            "kind": "gss" if isinstance(ent, GssState) else "drone",
        }
        self.adversary.captures.append(cap)
        self._event("capture", label=cap["label"], entity=ident, puf_oracle=puf_oracle,
                    values=len(values))
        return cap

    def find_frame(self, match: dict) -> Frame:
        for fr in self.frames:
            if fr.emitter == ADVERSARY:
                continue
            if _matches({"match": match, "fired": 0}, fr, self.frames):
                return fr
        raise ScriptError(f"no observed frame matches {match}")

    def _adversarial(self, emit) -> dict:
        """Run an adversary emission and report how the receiver reacted."""
        before = len(self.rejections)
        fr = emit()
        self.pump()
        rej = [r for r in self.rejections[before:] if r["seq"] == fr.seq]
        return {
            "seq": fr.seq, "msg_type": fr.msg_type, "to": fr.dst,
            "result": "rejected" if rej else "accepted",
            "reason": rej[0]["reason"] if rej else None,
            "victim_cost": rej[0]["cost"] if rej else None,
        }

    def replay(self, match: dict, to: int | None = None) -> dict:
        orig = self.find_frame(match)
        return self._adversarial(lambda: self.adversary_send(
            orig.src, orig.dst if to is None else to, orig.msg_type, orig.payload))

    def inject(self, msg_type: str, to: int, claim: int, values: dict | None = None) -> dict:
        payload = forge_payload(msg_type, claim, self.adversary.rng, values)
        return self._adversarial(lambda: self.adversary_send(claim, to, msg_type, payload))

    # forward secrecy analysis

    def transcript_terms(self):
        if self.tracer is None:
            return []
        out = []
        for fr in self.frames:
            msg = _try_decode(fr)
            if msg is None:
                out.append(self.tracer.term(fr.payload))
                continue
            out.extend(self.tracer.term(v) for v in field_bytes(msg).values())
        return out

    def pfs_check(self, cap: dict, depth_bound=None) -> dict:
        if self.tracer is None:
            raise ScriptError("forward-secrecy analysis needs tracing enabled")
        tr = self.tracer
        kb = KnowledgeBase(tr.table)
        kb.add(*self.transcript_terms())
        kb.add(*(tr.term(v) for v in cap["values"]))
        if cap["puf_oracle"]:
            kb.grant_oracle(cap["device"])
        targets = {k["session_id"]: tr.term(k["key"]) for k in self.session_keys}
        cl = knowledge_closure(kb, depth_bound, targets=targets.values())
        before = [k for k in self.session_keys if k["time"] <= cap["time"]]
        after = [k for k in self.session_keys if k["time"] > cap["time"]]
        # the captured entity's latest key per pair is the one at the capture point
        latest = {}
        for k in before:
            if cap["entity"] in k["pair"]:
                latest[tuple(k["pair"])] = k["session_id"]
        current = set(latest.values())
        past = [k for k in before if k["session_id"] not in current]
        leaked = [k["session_id"] for k in past if cl.derivable(targets[k["session_id"]])]
        later = [k["session_id"] for k in after if cl.derivable(targets[k["session_id"]])]
        return {
            "label": cap["label"], "entity": cap["entity"], "kind": cap["kind"],
            "level": "full-capture" if cap["puf_oracle"] else "memory-dump",
            "keys_before": len(past), "leaked_before": leaked,
            "current": sorted(current),
            "current_derivable": sorted(s for s in current if cl.derivable(targets[s])),
            "keys_after": len(after), "derivable_after": later,
            "bounded": cl.bounded, "rounds": cl.rounds,
            "verdict": "holds" if not leaked else "broken",
        }

    # whole scenario

    def run(self) -> dict:
        with self._observing():
            for i, st in enumerate(self.config["sessions"]):
                self.steps.append(self._step(i, st))
            pfs = [self.pfs_check(c) for c in self.adversary.captures]
        for st in self.steps:
            if st["op"] == "capture":
                res = next(p for p in pfs if p["label"] == st["label"])
                st["result"] = res["verdict"]
                st["pass"] = st["expect"] == res["verdict"]
        return self.report(pfs)

    def _step(self, i, st) -> dict:
        op = st["op"]
        out = {"index": i, "op": op}
        scoped = [dict(r, fired=0, armed_at=self.seq) for r in st.get("adversary", [])]
        self.adversary.rules.extend(scoped)
        try:
            self._step_body(st, out)
        finally:
            for r in scoped:
                self.adversary.rules.remove(r)
        if scoped:
            out["adversary_fired"] = sum(r["fired"] for r in scoped)
        out["pass"] = out["result"] == out["expect"]
        return out

    def _step_body(self, st, out):
        op = st["op"]
        if op == "enroll":
            ok = self.enroll(st["drone"], st.get("domain"))
            out.update(result="ok" if ok else "failed", expect=st.get("expect", "ok"))
        elif op == "make":
            a, b = st["pair"]
            first = st.get("initiator", a if st.get("direction", "forward") != "reverse" else b)
            other = b if first == a else a
            results = []
            for n in range(st.get("count", 1)):
                ini, peer = (first, other) if (st.get("direction") != "alternate" or n % 2 == 0) \
                    else (other, first)
                results.append(self.make(ini, peer))
            out.update(result="ok" if all(results) else "failed", sessions=len(results),
                       succeeded=sum(results), expect=st.get("expect", "ok"))
        elif op == "leave":
            ok = self.leave(st["drone"])
            out.update(result="ok" if ok else "failed", expect=st.get("expect", "ok"))
        elif op == "provision":
            self.provision(st["drone"], st["domain"], st.get("relay", True))
            out.update(result="ok", expect=st.get("expect", "ok"))
        elif op == "capture":
            cap = self.capture(st["entity"], bool(st.get("puf_oracle", False)), st.get("label", ""))
            out.update(label=cap["label"], result="pending", expect=st.get("expect", "holds"))
        elif op == "replay":
            res = self.replay(st["match"], st.get("to"))
            out.update(res, expect=st.get("expect", "rejected"))
        elif op == "inject":
            res = self.inject(st["msg_type"], st["to"], st.get("claim", 0), st.get("fields"))
            out.update(res, expect=st.get("expect", "rejected"))

    def storage(self) -> dict:
        out = {}
        for d in sorted(self.drones.values(), key=lambda x: x.id):
            for pid, slot in sorted(d.peer_slots.items()):
                if slot.is_holder and "d2d" not in out:
                    out["d2d"] = {"pair": [d.id, pid], "drone_a": d2d_storage_bits(d, pid),
                                  "peer": d2d_storage_bits(self.drones[pid], d.id)}
            if d.gss_slot is not None and "d2g" not in out:
                st = d2g_storage_bits(d, self.gss[d.gss_slot.gss_id])
                out["d2g"] = {"drone": d.id, "drone_a": st["drone"],
                              "peer": st["gss_record"], **st, "gated": False}
        return out

    def invariants(self) -> dict:
        pads = self.recorder.of("pad")
        keys = [k["key"] for k in self.session_keys]
        honest = [s for s in self.make_sessions if s["ok"]]
        bad_ops = [s["session_id"] for s in honest if not s["resync"] and (
            s["holder_ops"] != _EXPECTED_OPS[s["profile"]] or s["generator_ops"] != _EXPECTED_OPS[s["profile"]])]
        bad_bits = [s["session_id"] for s in honest
                    if (s["messages"], s["initiator_bits"], s["responder_bits"]) != (2, 544, 512)]
        led = self.ledgers().values()
        return {
            "envelope_violations": self.envelope_violations,
            "pads": len(pads), "duplicate_pads": len(pads) - len(set(pads)),
            "session_keys": len(keys), "duplicate_session_keys": len(keys) - len(set(keys)),
            "op_count_violations": bad_ops, "bit_count_violations": bad_bits,
            "forbidden_ops": sum(l.total(k) for l in led for k in ("rs", "me", "sig", "verf", "mac")),
        }

    def report(self, pfs=()) -> dict:
        inv = self.invariants()
        failures = [f"sessions[{s['index']}] {s['op']}: expected {s['expect']}, got {s['result']}"
                    for s in self.steps if not s["pass"]]
        if inv["envelope_violations"]:
            failures.append("envelope integrity violated")
        if inv["op_count_violations"]:
            failures.append(f"op counts differ in {inv['op_count_violations']}")
        if inv["bit_count_violations"]:
            failures.append(f"bit counts differ in {inv['bit_count_violations']}")
        if inv["forbidden_ops"]:
            failures.append("signature/exponentiation counters were used")
        if inv["duplicate_session_keys"]:
            failures.append("session keys repeat")
        return {
            "schema": SCHEMA,
            "name": self.config.get("name", ""),
            "seed": self.seed,
            "verdict": "pass" if not failures else "fail",
            "failures": failures,
            "steps": self.steps,
            "metrics": report(self.ledgers(), self.make_sessions, self.storage()),
            "invariants": inv,
            "rejections": self.rejections,
            "pfs": list(pfs),
            "transcript_sha256": hashlib.sha256(self.transcript_text().encode()).hexdigest(),
        }

    def transcript_text(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.log)


_EXPECTED_OPS = {"d2d": {"puf": 2, "hash": 9}, "d2g": {"puf": 2, "hash": 7}}


class _Stack:
    def __init__(self):
        self._cms = []

    def enter(self, cm):
        self._cms.append(cm)

    def __enter__(self):
        for cm in self._cms:
            cm.__enter__()
        return self

    def __exit__(self, *exc):
        for cm in reversed(self._cms):
            cm.__exit__(*exc)
        return False


def _has_previous(ent, peer_id) -> bool:
    try:
        return protocol.chain_for(ent, protocol.profile_between(ent, peer_id), peer_id).previous is not None
    except protocol.ProtocolError:
        return False


def _seed_int(seed, label) -> int:
    return int.from_bytes(hashlib.sha256(f"{seed}:{label}".encode()).digest()[:8], "big")


def _try_decode(fr: Frame):
    try:
        return decode(fr.msg_type, fr.payload)
    except MalformedMessage:
        return None


def _matches(rule, fr: Frame, frames) -> bool:
    m = rule["match"]
    if fr.emitter == ADVERSARY:
        return False
    if "seq" in m:
        return fr.seq == m["seq"]
    if fr.msg_type != m["msg_type"]:
        return False
    if "nth" not in m:
        return True
    lo = rule.get("armed_at", 0)
    n = sum(1 for f in frames
            if f.msg_type == fr.msg_type and f.emitter != ADVERSARY and lo < f.seq <= fr.seq)
    return n == m["nth"]


def forge_payload(msg_type: str, claim: int, rng: random.Random, values: dict | None = None) -> bytes:
    """Wire bytes for a message made up by an adversary with no secrets: ids set to the claim, the rest random."""
    values = values or {}
    out = b""
    for name, kind in MESSAGE_TYPES[msg_type].LAYOUT:
        if name in values:
            chunk = bytes.fromhex(values[name])
        elif kind == ID:
            chunk = claim.to_bytes(4, "big")
        else:
            chunk = rng.randbytes(_WIRE_BYTES[kind])
        out += chunk
    return out


def run_simulation(config: dict, seed: int | None = None) -> tuple[dict, str]:
    """Run a scenario; returns the report and the JSON-lines transcript."""
    sim = Simulator(config, seed)
    rep = sim.run()
    return rep, sim.transcript_text()
