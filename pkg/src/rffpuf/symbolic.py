"""Dolev-Yao knowledge closure over the protocol's term algebra.

Terms are interned integers in a `TermTable`. Hash and PUF are free function
symbols; XOR is associative, commutative, nilpotent with unit ZERO, so XOR
reasoning reduces to linear algebra over GF(2) on the non-XOR subterms.

A `Tracer` installed while a simulation runs maps every concrete value the
protocol computes back to the term that produced it, so transcripts and
captured memory can be lifted into the symbolic world.
"""

from __future__ import annotations

from dataclasses import dataclass, field

NAME, HASH, PUF, XOR, ENC, PRIV, ZERO = "name", "hash", "puf", "xor", "enc", "priv", "zero"


class TermTable:
    """Hash-consed term store. Structurally equal terms get the same id."""

    def __init__(self):
        self.kind: list[str] = []
        self.args: list[tuple] = []
        self.public: list[bool] = []
        self._index: dict = {}
        self.zero = self._mk(ZERO, (), True)

    def _mk(self, kind, args, public=False):
        key = (kind, args)
        t = self._index.get(key)
        if t is None:
            t = len(self.kind)
            self.kind.append(kind)
            self.args.append(args)
            self.public.append(public)
            self._index[key] = t
        return t

    def name(self, label: str, public: bool = False) -> int:
        return self._mk(NAME, (label,), public)

    def hash(self, left: int, right: int) -> int:
        return self._mk(HASH, (left, right))

    def puf(self, device, challenge: int) -> int:
        return self._mk(PUF, (device, challenge))

    def priv(self, owner: str) -> int:
        return self._mk(PRIV, (owner,))

    def enc(self, owner: str, plaintext: int, nonce: int) -> int:
        return self._mk(ENC, (owner, plaintext, nonce))

    def xor(self, *terms: int) -> int:
        acc = set()
        for t in terms:
            for leaf in self.xor_leaves(t):
                acc ^= {leaf}
        if not acc:
            return self.zero
        if len(acc) == 1:
            return next(iter(acc))
        return self._mk(XOR, tuple(sorted(acc)))

    def xor_leaves(self, t: int):
        if self.kind[t] == XOR:
            return self.args[t]
        if self.kind[t] == ZERO:
            return ()
        return (t,)

    def children(self, t: int):
        k, a = self.kind[t], self.args[t]
        if k in (HASH, XOR):
            return a
        if k == PUF:
            return (a[1],)
        if k == ENC:
            return (a[1], a[2])
        return ()

    def show(self, t: int, depth: int = 4) -> str:
        k, a = self.kind[t], self.args[t]
        if depth == 0:
            return "…"
        if k == NAME:
            return a[0]
        if k == ZERO:
            return "0"
        if k == PRIV:
            return f"sk[{a[0]}]"
        if k == HASH:
            return f"H({self.show(a[0], depth - 1)}, {self.show(a[1], depth - 1)})"
        if k == PUF:
            return f"PUF{a[0]}({self.show(a[1], depth - 1)})"
        if k == ENC:
            return f"Enc[{a[0]}]({self.show(a[1], depth - 1)})"
        return " ^ ".join(self.show(x, depth - 1) for x in a)


class Tracer:
    """Maps concrete byte strings to terms as the protocol computes them.

    The first registration of a value wins, so a secret recovered by
    unmasking keeps the term under which it was originally minted.
    Values that were never registered are public constants when they are
    not 256 bits wide (ids, tags, labels) and opaque secrets otherwise.
    """

    def __init__(self, table: TermTable | None = None):
        self.table = table or TermTable()
        self.terms: dict[bytes, int] = {}
        self._fresh = 0
        self.opaque = 0

    def term(self, value: bytes) -> int:
        value = bytes(value)
        t = self.terms.get(value)
        if t is not None:
            return t
        if len(value) == 4:
            t = self.table.name(f"id:{int.from_bytes(value, 'big')}", public=True)
        elif len(value) != 32:
            t = self.table.name(f"const:{value.hex()}", public=True)
        elif not any(value):
            t = self.table.zero
        else:
            self.opaque += 1
            t = self.table.name(f"opaque:{value.hex()[:16]}")
        self.terms[value] = t
        return t

    def _register(self, value: bytes, t: int):
        self.terms.setdefault(bytes(value), t)

    def on_random(self, out):
        self._fresh += 1
        self._register(out, self.table.name(f"r{self._fresh}"))

    def on_hash(self, x, y, out):
        self._register(out, self.table.hash(self.term(x), self.term(y)))

    def on_xor(self, a, b, out):
        self._register(out, self.table.xor(self.term(a), self.term(b)))

    def on_puf(self, device, c, out):
        self._register(out, self.table.puf(device, self.term(c)))

    def on_keygen(self, pk, sk):
        owner = pk.hex()[:16]
        self._register(pk, self.table.name(f"pk:{owner}", public=True))
        self._register(sk, self.table.priv(owner))

    def on_encrypt(self, pk, m, ct):
        self._fresh += 1
        nonce = self.table.name(f"e{self._fresh}")
        self._register(ct, self.table.enc(pk.hex()[:16], self.term(m), nonce))


@dataclass
class KnowledgeBase:
    table: TermTable
    known: set = field(default_factory=set)
    oracles: set = field(default_factory=set)  # devices the adversary can query

    def add(self, *terms: int):
        self.known.update(terms)
        return self

    def grant_oracle(self, device):
        self.oracles.add(device)
        return self


class _Span:
    """Incremental GF(2) row-echelon basis over bitmask vectors."""

    def __init__(self):
        self.rows: dict[int, int] = {}

    def reduce(self, v: int) -> int:
        rows = self.rows
        while v:
            hb = v.bit_length() - 1
            r = rows.get(hb)
            if r is None:
                return v
            v ^= r
        return 0

    def contains(self, v: int) -> bool:
        return self.reduce(v) == 0

    def add(self, v: int) -> bool:
        v = self.reduce(v)
        if not v:
            return False
        self.rows[v.bit_length() - 1] = v
        return True


@dataclass
class Closure:
    table: TermTable
    universe: list
    span: _Span = field(repr=False)
    bit: dict = field(repr=False)
    rounds: int = 0
    bounded: bool = False

    def vector(self, t: int) -> int:
        v = 0
        for leaf in self.table.xor_leaves(t):
            v ^= 1 << self.bit[leaf]
        return v

    def derivable(self, t: int) -> bool:
        if any(leaf not in self.bit for leaf in self.table.xor_leaves(t)):
            return False
        return self.span.contains(self.vector(t))

    @property
    def terms(self) -> set:
        return {t for t in self.universe if self.derivable(t)}


def _subterms(table: TermTable, roots):
    seen = set()
    stack = list(roots)
    while stack:
        t = stack.pop()
        if t in seen:
            continue
        seen.add(t)
        stack.extend(table.children(t))
    return seen


def knowledge_closure(kb: KnowledgeBase, depth_bound: int | None = 6, targets=()) -> Closure:
    """Saturate the adversary's knowledge.

    Each round applies every rule once: XOR combination (implicit in the
    span), hash application, PUF queries on devices whose oracle is held, and
    decryption under a derivable private key. Only subterms of the knowledge
    and the targets are ever constructed. `depth_bound=None` runs to the
    fixpoint; otherwise the result is flagged `bounded` if the bound cut the
    saturation short.
    """
    table = kb.table
    universe = sorted(_subterms(table, set(kb.known) | set(targets)))
    leaves = sorted({leaf for t in universe for leaf in table.xor_leaves(t)})
    bit = {leaf: i for i, leaf in enumerate(leaves)}
    cl = Closure(table, universe, _Span(), bit)
    for t in kb.known:
        cl.span.add(cl.vector(t))
    for leaf in leaves:
        if table.public[leaf]:
            cl.span.add(1 << bit[leaf])

    pending = [t for t in leaves if table.kind[t] in (HASH, PUF, ENC)]
    opened = set()
    while True:
        if depth_bound is not None and cl.rounds >= depth_bound:
            cl.bounded = True
            break
        cl.rounds += 1
        grown = []
        for t in pending:
            k, a = table.kind[t], table.args[t]
            if k == HASH:
                ok = cl.derivable(a[0]) and cl.derivable(a[1])
            elif k == PUF:
                ok = a[0] in kb.oracles and cl.derivable(a[1])
            else:
                ok = cl.derivable(a[1]) and cl.derivable(a[2])
            if ok:
                grown.append(t)
        for t in leaves:
            if table.kind[t] == ENC and t not in opened and cl.derivable(t):
                owner = table.args[t][0]
                key = table._index.get((PRIV, (owner,)))
                if key is not None and key in bit and cl.derivable(key):
                    opened.add(t)
                    grown.append(table.args[t][1])
        changed = False
        for t in grown:
            changed |= cl.span.add(cl.vector(t))
        pending = [t for t in pending if not cl.derivable(t)]
        if not changed:
            # one more pass would not add anything: fixpoint reached
            cl.bounded = False
            break
    return cl
