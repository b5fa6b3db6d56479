"""Counter-based random streams.

A stream is identified by a 64-bit key; its ``j``-th uniform is a pure hash
of ``(key, j)`` built from the SplitMix64 finalizer, so any element can be
computed without generating its predecessors.  Child keys are derived from
``(parent, index)`` the same way, which gives per-draw, per-cell and
per-replicate streams that do not depend on execution order.
"""

from __future__ import annotations

import numpy as np

from . import _kernels

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(x: int) -> int:
    x &= MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def as_seed(seed: int) -> int:
    """Reduce any Python integer to an unsigned 64-bit seed."""
    return int(seed) & MASK64


def derive_seed(seed: int, *ids: int) -> int:
    """Child key of ``seed`` at the path ``ids`` (each id a non-negative int)."""
    key = as_seed(seed)
    for i in ids:
        key = _mix64(_mix64(key) + _GOLDEN * (as_seed(i) + 1))
    return key


def uniforms(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """``count`` open-interval uniforms from stream ``seed`` starting at ``offset``."""
    return _kernels.uniforms(np.uint64(as_seed(seed)), int(offset), int(count))
