"""Canned attack batteries run against the simulator.

Each suite returns a list of outcome records
``{scenario, attack, result, reason, victim_cost, attempts, rejected}``;
an attack passes when every attempt was rejected and, where recorded,
honest sessions still succeed afterwards (``recovered``).
"""

from __future__ import annotations

import random
from collections import Counter

from . import protocol
from .messages import MESSAGE_TYPES, field_offsets
from .netsim import ADVERSARY, Simulator

SUITES = ("replay", "mitm", "impersonation", "dos", "capture")
POSITIONS_PER_FIELD = 64

GSS = 100
DRONES = (1, 2, 3)


def base_config(drones=DRONES, **over) -> dict:
    cfg = {
        "name": "attack-base",
        "domains": [{"name": "d1", "gss": GSS}],
        "drones": [{"id": i, "domain": "d1"} for i in drones],
        "sessions": [{"op": "enroll", "drone": i} for i in drones],
    }
    cfg.update(over)
    return cfg


def _fresh(seed, drones=DRONES, **over) -> Simulator:
    sim = Simulator(base_config(drones, **over), seed)
    sim.run()
    return sim


def _outcome(scenario, attack, results, **extra) -> dict:
    rejected = sum(r["result"] == "rejected" for r in results)
    reasons = Counter(r["reason"] for r in results if r["reason"])
    worst = Counter()
    for r in results:
        for k, v in (r.get("victim_cost") or {}).items():
            worst[k] = max(worst[k], v)
    passed = bool(results) and rejected == len(results) and extra.get("recovered", True)
    return {
        "scenario": scenario, "attack": attack,
        "result": "rejected" if passed else "accepted",
        "attempts": len(results), "rejected": rejected,
        "reason": dict(sorted(reasons.items())),
        "victim_cost": dict(sorted(worst.items())),
        **extra,
    }


def _run(sim, fn):
    with sim._observing():
        return fn()


# replay


def replay_suite(seed: int = 1) -> list[dict]:
    sim = _fresh(seed)
    out = []

    def body():
        res = [sim.replay({"msg_type": "EnrollM1", "nth": n}, to=GSS) for n in (1, 2, 3)]
        out.append(_outcome("replay", "enrollment-m1", res))

        res = []
        for pair, kind in (((3, 1), "d2d"), ((3, GSS), "d2g"), ((GSS, 3), "d2g")):
            start = sum(1 for f in sim.frames if f.msg_type == "MakeM1" and f.emitter != ADVERSARY)
            for _ in range(3):
                sim.make(*pair)
            # session `start+1` is now two epochs old
            for mt, n in (("MakeM1", start + 1), ("MakeM1", start + 2)):
                res.append(sim.replay({"msg_type": mt, "nth": n}))
        out.append(_outcome("replay", "stale-make-m1", res))

        res = []
        for pair in ((3, 1), (1, 3), (GSS, 3), (3, GSS)):
            n_m2 = sum(1 for f in sim.frames if f.msg_type == "MakeM2" and f.emitter != ADVERSARY)
            sim.make(*pair)
            sim.make(*pair)
            ini = sim.entity(pair[0])
            old = sim.find_frame({"msg_type": "MakeM2", "nth": n_m2 + 1})
            # initiator with a fresh session open, and with none
            prof = protocol.profile_between(ini, pair[1])
            protocol.make_initiate(ini, prof, pair[1], ini.rng)
            res.append(sim._adversarial(
                lambda: sim.adversary_send(pair[1], pair[0], "MakeM2", old.payload)))
            protocol.session_close(ini, pair[1])
            res.append(sim._adversarial(
                lambda: sim.adversary_send(pair[1], pair[0], "MakeM2", old.payload)))
        out.append(_outcome("replay", "stale-make-m2", res,
                            recovered=sim.make(3, 1) and sim.make(GSS, 3)))

    _run(sim, body)
    return out


# single-bit tampering


def _positions(msg_type, fname, rng, per_field):
    lo, hi = field_offsets(msg_type)[fname]
    width = hi - lo
    if width <= per_field:
        return list(range(width))
    return sorted(rng.sample(range(width), per_field))


def _tamper_trigger(sim, msg_type):
    if msg_type in ("MakeM1", "MakeM2", "KeyConfirm"):
        return lambda n: sim.make(*((3, 1), (1, 3), (3, GSS), (GSS, 3))[n % 4])
    if msg_type == "EnrollAck":
        return lambda n: sim.enroll(1)
    return lambda n: sim.enroll(3)


def mitm_suite(seed: int = 2, per_field: int = POSITIONS_PER_FIELD) -> list[dict]:
    out = []
    rng = random.Random(f"{seed}:mitm")
    for msg_type in ("EnrollM1", "EnrollM2", "EnrollAck", "MakeM1", "MakeM2", "KeyConfirm"):
        drones = (1,) if msg_type == "EnrollAck" else DRONES
        sim = _fresh(seed, drones)
        trigger = _tamper_trigger(sim, msg_type)
        for fname, _ in MESSAGE_TYPES[msg_type].LAYOUT:
            res = []
            for n, pos in enumerate(_positions(msg_type, fname, rng, per_field)):
                seen = sum(1 for f in sim.frames if f.msg_type == msg_type and f.emitter != ADVERSARY)
                rule = {"action": "modify", "match": {"msg_type": msg_type, "nth": seen + 1},
                        "field": fname, "bits": [pos], "fired": 0}
                sim.adversary.rules = [rule]
                before = len(sim.frames)
                _run(sim, lambda: trigger(n))
                sim.adversary.rules = []
                forged = [f.seq for f in sim.frames[before:] if f.emitter == ADVERSARY]
                if not forged:
                    res.append({"result": "accepted", "reason": "not-triggered"})
                    continue
                rej = [r for r in sim.rejections if r["seq"] == forged[0]]
                res.append({"result": "rejected" if rej else "accepted",
                            "reason": rej[0]["reason"] if rej else None,
                            "victim_cost": rej[0]["cost"] if rej else None})
            out.append(_outcome("mitm", f"{msg_type}.{fname}", res,
                                recovered=_run(sim, lambda: trigger(0))))
    return out


# impersonation without secrets


def impersonation_suite(seed: int = 3, attempts: int = 64) -> list[dict]:
    sim = _fresh(seed)
    out = []

    def body():
        res = [sim.inject("EnrollM1", GSS, claim) for claim in (*DRONES, 999) for _ in range(attempts // 4)]
        out.append(_outcome("impersonation", "enroll-as-registered-drone", res))
        for claim, to, label in ((3, 1, "d2d-m1"), (1, 3, "d2d-m1-generator"),
                                 (1, GSS, "d2g-m1-to-gss"), (GSS, 1, "d2g-m1-as-gss"),
                                 (7, 1, "m1-unknown-id")):
            res = [sim.inject("MakeM1", to, claim) for _ in range(attempts)]
            out.append(_outcome("impersonation", label, res))
        res = []
        for ini_id, peer in ((3, 1), (1, 3), (GSS, 3), (3, GSS)):
            ini = sim.entity(ini_id)
            prof = protocol.profile_between(ini, peer)
            for _ in range(attempts // 4):
                protocol.make_initiate(ini, prof, peer, ini.rng)
                res.append(sim.inject("MakeM2", ini_id, peer))
                protocol.session_close(ini, peer)
        out.append(_outcome("impersonation", "m2-into-open-session", res,
                            recovered=sim.make(3, 1) and sim.make(1, GSS)))

    _run(sim, body)
    return out


# denial of service cost bound


def _within_bound(r, gated: bool) -> bool:
    c = r["victim_cost"] or {}
    if c.get("bits_sent", 0) or c.get("asym_enc", 0):
        return False
    if gated:
        return c.get("puf", 0) == 0 and c.get("asym_dec", 0) == 0
    return c.get("puf", 0) <= 1 and c.get("hash", 0) <= 3 and c.get("asym_dec", 0) == 0


def dos_suite(seed: int = 4, attempts: int = 64) -> list[dict]:
    out = []
    for continuous in (False, True):
        sim = _fresh(seed, continuous_rffi=continuous)
        gated_targets = [("EnrollM1", GSS, 1)]
        cred_targets = [("MakeM1", 1, 3), ("MakeM1", 3, 1)]
        (gated_targets if continuous else cred_targets).extend(
            [("MakeM1", GSS, 3), ("MakeM2", GSS, 3), ("KeyConfirm", GSS, 3)])

        def flood(targets, gated):
            for mt, to, claim in targets:
                res = [sim.inject(mt, to, claim) for _ in range(attempts)]
                ok = [r for r in res if r["result"] == "rejected" and _within_bound(r, gated)]
                o = _outcome("dos", f"{mt}->{to}" + (" continuous-rffi" if continuous else ""), res,
                             gate="rffi" if gated else "credential")
                if len(ok) != len(res):
                    o["result"] = "accepted"
                out.append(o)

        _run(sim, lambda: (flood(gated_targets, True), flood(cred_targets, False)))
    return out


# state capture and forward secrecy


def capture_config(n: int = 10, rotate_on_join: bool = True) -> dict:
    """Three drones; drone 3 holds its D2D secret with drone 1, which generates it."""
    sessions = [{"op": "enroll", "drone": i} for i in DRONES]
    sessions += [
        {"op": "make", "pair": [3, 1], "direction": "alternate", "count": n - 1},
        {"op": "make", "pair": [3, GSS], "direction": "alternate", "count": 2},
        {"op": "make", "pair": [3, 1], "count": 1},
    ]
    caps = []
    for ent in (3, 1):
        for oracle in (False, True):
            label = f"{'holder' if ent == 3 else 'generator'}-{'full' if oracle else 'dump'}"
            caps.append({"op": "capture", "entity": ent, "puf_oracle": oracle, "label": label})
    sessions += caps
    sessions += [{"op": "make", "pair": [3, 1], "direction": "alternate", "count": 2},
                 {"op": "make", "pair": [GSS, 3], "count": 1}]
    return base_config(DRONES, sessions=sessions, rotate_on_join=rotate_on_join,
                       name="capture-pfs")


def capture_suite(seed: int = 5, n: int = 10) -> list[dict]:
    sim = Simulator(capture_config(n), seed)
    rep = sim.run()
    out = []
    for p in rep["pfs"]:
        res = [{"result": "rejected" if p["verdict"] == "holds" else "accepted",
                "reason": "no-past-key-derivable" if p["verdict"] == "holds" else "past-key-derived"}]
        out.append(_outcome("capture", p["label"], res, level=p["level"],
                            past_keys=p["keys_before"], leaked=p["leaked_before"],
                            current_derivable=len(p["current_derivable"]),
                            later_derivable=len(p["derivable_after"]), bounded=p["bounded"]))
    return out


RUNNERS = {
    "replay": replay_suite,
    "mitm": mitm_suite,
    "impersonation": impersonation_suite,
    "dos": dos_suite,
    "capture": capture_suite,
}


def run_suites(names, seed: int | None = None) -> list[dict]:
    out = []
    for name in names:
        fn = RUNNERS[name]
        out.extend(fn() if seed is None else fn(seed))
    return out
