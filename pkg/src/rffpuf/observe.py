"""Simulator-only observation hooks.

Protocol and crypto code report what they compute here; nothing is recorded
unless a simulator installs a tracer or recorder. Protocol code never reads
back from these hooks.
"""

from __future__ import annotations

import contextlib
import contextvars
from collections import defaultdict

_tracer = contextvars.ContextVar("rffpuf_tracer", default=None)
_recorder = contextvars.ContextVar("rffpuf_recorder", default=None)


def tracer():
    return _tracer.get()


@contextlib.contextmanager
def tracing(t):
    token = _tracer.set(t)
    try:
        yield t
    finally:
        _tracer.reset(token)


class Recorder:
    """Ground-truth log of values the protocol treats as secret or as pads."""

    def __init__(self):
        self.values = defaultdict(list)

    def note(self, kind: str, value: bytes, **meta):
        self.values[kind].append((bytes(value), meta))

    def of(self, kind):
        return [v for v, _ in self.values.get(kind, [])]


@contextlib.contextmanager
def recording(r: Recorder):
    token = _recorder.set(r)
    try:
        yield r
    finally:
        _recorder.reset(token)


def note(kind: str, value: bytes, **meta):
    r = _recorder.get()
    if r is not None:
        r.note(kind, value, **meta)
