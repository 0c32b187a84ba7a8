"""Operation and traffic accounting."""

from __future__ import annotations

import contextlib
from collections import Counter
from dataclasses import dataclass, field

PHASES = ("registration", "enrollment", "make", "data")

# rs/me/sig/verf/mac exist so reports can show the comparison columns; this protocol never bumps them
OP_KINDS = (
    "puf", "hash", "asym_enc", "asym_dec",
    "rs", "me", "sig", "verf", "mac",
    "rffi_check", "rffi_reject",
)
TRAFFIC_KINDS = ("msg_sent", "msg_recv", "bits_sent", "bits_recv")
KINDS = OP_KINDS + TRAFFIC_KINDS

# Reference numbers, reported next to measured values.
EXPECTED_MAKE_OPS = {
    "d2d": {"per_party": {"puf": 2, "hash": 9}, "total": {"puf": 4, "hash": 18}},
    "d2g": {"per_party": {"puf": 2, "hash": 7}, "total": {"puf": 4, "hash": 14}},
}
EXPECTED_MAKE_BITS = {
    "d2d": {"messages": 2, "initiator": 544, "responder": 512, "total": 1056,
            "storage_drone_a": 864, "storage_peer": 608},
    "d2g": {"messages": 2, "initiator": 544, "responder": 512, "total": 1056,
            "storage_drone_a": 832, "storage_peer": "S_RFF + 576"},
}
# milliseconds per operation on the reference board; static, never measured here
REFERENCE_OP_MS = {
    "puf": 0.5658, "hash": 0.0066, "rs": 0.3049, "me": 1.8458,
    "sig": 19.7414, "verf": 38.8412, "mac": 0.0318,
}


class LedgerError(ValueError):
    pass


@dataclass
class CostLedger:
    owner: str = ""
    by_phase: dict = field(default_factory=lambda: {p: Counter() for p in PHASES})
    _phase: str = "make"

    @contextlib.contextmanager
    def phase(self, name: str):
        if name not in PHASES:
            raise LedgerError(f"unknown phase {name!r}")
        prev, self._phase = self._phase, name
        try:
            yield self
        finally:
            self._phase = prev

    @property
    def current_phase(self):
        return self._phase

    def record(self, kind: str, n: int = 1, phase: str | None = None):
        if kind not in KINDS:
            raise LedgerError(f"unknown counter {kind!r}")
        if n < 0:
            raise LedgerError("counters only increase")
        self.by_phase[phase or self._phase][kind] += n

    def sent(self, bits: int, phase: str | None = None):
        self.record("msg_sent", 1, phase)
        self.record("bits_sent", bits, phase)

    def received(self, bits: int, phase: str | None = None):
        self.record("msg_recv", 1, phase)
        self.record("bits_recv", bits, phase)

    def total(self, kind: str, phase: str | None = None) -> int:
        if phase is not None:
            return self.by_phase[phase][kind]
        return sum(c[kind] for c in self.by_phase.values())

    def snapshot(self) -> dict:
        return {p: Counter(c) for p, c in self.by_phase.items()}

    def since(self, snap: dict, phase: str | None = None) -> Counter:
        out = Counter()
        phases = [phase] if phase else PHASES
        for p in phases:
            cur = self.by_phase[p]
            for k in KINDS:
                d = cur[k] - snap[p][k]
                if d:
                    out[k] += d
        return out

    def as_dict(self) -> dict:
        return {p: {k: c[k] for k in KINDS if c[k]} for p, c in self.by_phase.items()}

    # convenience views of the totals
    puf_evals = property(lambda self: self.total("puf"))
    hash_evals = property(lambda self: self.total("hash"))
    asym_enc = property(lambda self: self.total("asym_enc"))
    asym_dec = property(lambda self: self.total("asym_dec"))
    messages_sent = property(lambda self: self.total("msg_sent"))
    messages_received = property(lambda self: self.total("msg_recv"))
    bits_sent = property(lambda self: self.total("bits_sent"))
    bits_received = property(lambda self: self.total("bits_recv"))


def ledger_record(ledger: CostLedger, op_kind: str, phase: str) -> CostLedger:
    ledger.record(op_kind, 1, phase)
    return ledger


def bits_of(message) -> int:
    """Accounted width of a protocol message; simulator framing and ciphertext tags excluded."""
    from .messages import accounted_bits

    return accounted_bits(message)


def ops_string(counts) -> str:
    parts = []
    for kind, sym in (("puf", "T_PUF"), ("hash", "T_H"), ("asym_enc", "T_Enc"), ("asym_dec", "T_Dec")):
        n = counts.get(kind, 0)
        if n:
            parts.append(f"{n}{sym}")
    return "+".join(parts) or "0"


def report(ledgers: dict, make_sessions=(), storage=None) -> dict:
    """Per-entity ledgers, per-profile MAKE costs and storage, with reference numbers alongside."""
    entities = {name: led.as_dict() for name, led in sorted(ledgers.items())}
    totals = Counter()
    for led in ledgers.values():
        for c in led.by_phase.values():
            totals.update({k: c[k] for k in KINDS if c[k]})
    make = {}
    for kind in ("d2d", "d2g"):
        # sessions that had to fall back to a retained epoch pay for a second check
        rows = [s for s in make_sessions if s["profile"] == kind and s["ok"] and not s.get("resync")]
        if not rows:
            continue
        first = rows[0]
        make[kind] = {
            "sessions": len(rows),
            "messages": sorted({r["messages"] for r in rows}),
            "initiator_bits": sorted({r["initiator_bits"] for r in rows}),
            "responder_bits": sorted({r["responder_bits"] for r in rows}),
            "total_bits": sorted({r["initiator_bits"] + r["responder_bits"] for r in rows}),
            "holder_ops": dict(first["holder_ops"]),
            "generator_ops": dict(first["generator_ops"]),
            "ops_uniform": all(
                r["holder_ops"] == first["holder_ops"] and r["generator_ops"] == first["generator_ops"]
                for r in rows
            ),
            "expected": {"ops": EXPECTED_MAKE_OPS[kind], "bits": EXPECTED_MAKE_BITS[kind]},
        }
    return {
        "entities": entities,
        "totals": dict(sorted(totals.items())),
        "make": make,
        "storage": storage or {},
        "reference_op_ms": REFERENCE_OP_MS,
    }


def format_table(rep: dict) -> str:
    """Plain-text view laid out like the computation and communication comparison tables."""
    lines = []
    head = f"{'Protocol':<12}{'Holder':<18}{'Generator':<18}{'Total':<18}{'Expected':<16}"
    lines.append("Computation (MAKE phase)")
    lines.append(head)
    for kind, row in rep.get("make", {}).items():
        h, g = row["holder_ops"], row["generator_ops"]
        tot = Counter(h) + Counter(g)
        lines.append(
            f"{kind.upper():<12}{ops_string(h):<18}{ops_string(g):<18}{ops_string(tot):<18}"
            f"{ops_string(row['expected']['ops']['total']):<16}"
        )
    lines.append("")
    lines.append("Communication (MAKE phase) and storage per pair")
    lines.append(
        f"{'Protocol':<12}{'Msgs':<6}{'Init bits':<11}{'Resp bits':<11}{'Total':<8}"
        f"{'Expected':<9}{'Store A':<9}{'Store B/GSS':<14}{'Expected store':<18}"
    )
    storage = rep.get("storage", {})
    for kind, row in rep.get("make", {}).items():
        st = storage.get(kind, {})
        pb = row["expected"]["bits"]
        lines.append(
            f"{kind.upper():<12}{'/'.join(map(str, row['messages'])):<6}"
            f"{'/'.join(map(str, row['initiator_bits'])):<11}"
            f"{'/'.join(map(str, row['responder_bits'])):<11}"
            f"{'/'.join(map(str, row['total_bits'])):<8}{pb['total']:<9}"
            f"{str(st.get('drone_a', '-')):<9}{str(st.get('peer', '-')):<14}"
            f"{str(pb['storage_drone_a']) + ' / ' + str(pb['storage_peer']):<18}"
        )
    lines.append("")
    lines.append("Reference per-op times (ms, not measured): "
                 + ", ".join(f"{k}={v}" for k, v in rep.get("reference_op_ms", {}).items()))
    return "\n".join(lines) + "\n"
