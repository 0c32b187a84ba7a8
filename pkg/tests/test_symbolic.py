import random

from rffpuf import crypto, observe
from rffpuf.symbolic import KnowledgeBase, TermTable, Tracer, knowledge_closure


def _setup():
    t = TermTable()
    return t, t.name("k"), t.name("m"), t.name("s"), t.name("id", public=True)


def test_xor_canonical_form():
    t, k, m, s, _ = _setup()
    assert t.xor(k, m) == t.xor(m, k)
    assert t.xor(k, m, k) == m
    assert t.xor(k, k) == t.zero
    assert t.xor(t.xor(k, m), t.xor(m, s)) == t.xor(k, s)


def test_xor_unmasking():
    t, k, m, _, _ = _setup()
    cl = knowledge_closure(KnowledgeBase(t).add(k, t.xor(m, k)), depth_bound=None)
    assert cl.derivable(m)
    assert not cl.bounded


def test_hash_is_one_way():
    t, _, _, s, ident = _setup()
    cl = knowledge_closure(KnowledgeBase(t).add(t.hash(s, ident)), depth_bound=None, targets=[s])
    assert not cl.derivable(s)


def test_hash_application_and_chaining():
    t, k, m, s, ident = _setup()
    pad = t.hash(s, ident)
    kb = KnowledgeBase(t).add(s, t.xor(m, t.hash(pad, ident)))
    cl = knowledge_closure(kb, depth_bound=None)
    assert cl.derivable(m)
    assert cl.rounds >= 2


def test_depth_bound_is_reported():
    t, _, m, s, ident = _setup()
    x = s
    for _ in range(5):
        x = t.hash(x, ident)
    kb = KnowledgeBase(t).add(s, t.xor(m, x))
    assert not knowledge_closure(kb, depth_bound=2).derivable(m)
    assert knowledge_closure(kb, depth_bound=2).bounded
    assert knowledge_closure(kb, depth_bound=None).derivable(m)


def test_puf_needs_oracle():
    t, _, m, _, _ = _setup()
    c = t.name("c", public=True)
    r = t.puf(7, c)
    kb = KnowledgeBase(t).add(t.xor(m, r))
    assert not knowledge_closure(kb, None).derivable(m)
    assert knowledge_closure(kb.grant_oracle(7), None).derivable(m)


def test_decrypt_needs_private_key():
    t, _, m, _, _ = _setup()
    ct = t.enc("g", m, t.name("e1"))
    assert not knowledge_closure(KnowledgeBase(t).add(ct), None).derivable(m)
    assert knowledge_closure(KnowledgeBase(t).add(ct, t.priv("g")), None).derivable(m)


def test_two_time_pad_leaks_only_the_xor():
    t, k, m, s, _ = _setup()
    cl = knowledge_closure(KnowledgeBase(t).add(t.xor(m, k), t.xor(s, k)), None)
    assert cl.derivable(t.xor(m, s))
    assert not cl.derivable(m) and not cl.derivable(s)


def test_tracer_lifts_concrete_values():
    tr = Tracer()
    rng = random.Random(0)
    with observe.tracing(tr):
        s = crypto.random_block(rng)
        pad = crypto.hash2(s, crypto.id_bytes(4))
        wrapped = crypto.xor_mask(crypto.random_block(rng), pad)
    t = tr.table
    assert t.kind[tr.term(pad)] == "hash"
    assert t.args[tr.term(pad)] == (tr.term(s), tr.term(crypto.id_bytes(4)))
    assert t.kind[tr.term(wrapped)] == "xor"
    assert t.public[tr.term(crypto.id_bytes(9))]
    assert tr.term(bytes(32)) == t.zero
