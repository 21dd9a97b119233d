"""Operation counters hooked into the layer kernels.

Layers call :func:`record` with the sizes of the work they actually executed.
Outside a :func:`counting` block the call is a no-op.
"""
from __future__ import annotations

import contextlib
import contextvars
from collections import Counter

_active: contextvars.ContextVar[Counter | None] = contextvars.ContextVar("opcount", default=None)


def record(**ops: int) -> None:
    counter = _active.get()
    if counter is not None:
        for key, value in ops.items():
            counter[key] += int(value)


@contextlib.contextmanager
def counting():
    counter: Counter = Counter()
    token = _active.set(counter)
    try:
        yield counter
    finally:
        _active.reset(token)
