"""Monotone rescaling that makes two non-crossing samples a constant shift apart.

Sample-level construction: with treated order statistics ``a_(i)`` above the
control ones ``b_(i)``, build a strictly increasing ``g`` with
``g(a_(i)) - g(b_(i)) = 1`` for every ``i``.

Outcomes are first mapped through ``f``, the piecewise-linear interpolant of
the treated empirical CDF (slope-one extension outside the treated range),
so ``f(a_(i)) = i / n``.  The pairing ``v: f(a_(i)) -> f(b_(i))`` is then
interpolated into a continuous increasing map with ``v(u) < u``.  Following
its orbit from the top point ``u = 1`` gives ``1 > v(1) > v(v(1)) > ...``;
on the band ``(v^(m+1)(1), v^(m)(1)]`` put
``h(x) = v^(-m)(x) - m * (1 - v(1))``, which makes
``h(u) - h(v(u)) = 1 - v(1)`` and ``h`` continuous.  Finally
``g = h(f(.)) / (1 - v(1))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DominanceViolated, EmptySample, TiedValues, UnequalSizes

_MAX_ORBIT = 10_000_000


@dataclass(frozen=True, eq=False)
class MonotoneMap:
    """Piecewise-linear increasing map with linear extrapolation at both ends."""

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        k, v = np.asarray(self.knots, float), np.asarray(self.values, float)
        if k.shape != v.shape or k.size < 2:
            raise ValueError("need at least two matching knots and values")
        if np.any(np.diff(k) <= 0) or np.any(np.diff(v) <= 0):
            raise ValueError("knots and values must be strictly increasing")
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", v)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        k, v = self.knots, self.values
        out = np.interp(y, k, v)
        lo_slope = (v[1] - v[0]) / (k[1] - k[0])
        hi_slope = (v[-1] - v[-2]) / (k[-1] - k[-2])
        out = np.where(y < k[0], v[0] + (y - k[0]) * lo_slope, out)
        return np.where(y > k[-1], v[-1] + (y - k[-1]) * hi_slope, out)


def _prepare(y1, y0):
    a = np.sort(np.asarray(y1, dtype=float).ravel())
    b = np.sort(np.asarray(y0, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be nonempty")
    if a.size != b.size:
        raise UnequalSizes(f"sample sizes differ: {a.size} vs {b.size}")
    pooled = np.concatenate([a, b])
    if np.unique(pooled).size != pooled.size:
        raise TiedValues("pooled sample has tied values")
    return a, b


def check_dominance(y1, y0) -> bool:
    """True iff every treated order statistic exceeds the matching control one."""
    a, b = _prepare(y1, y0)
    return bool(np.all(a > b))


def _extrapolating_interp(x, xp, fp):
    """Linear interpolation through ``(xp, fp)`` extended with slope one."""
    out = np.interp(x, xp, fp)
    out = np.where(x < xp[0], fp[0] + (x - xp[0]), out)
    return np.where(x > xp[-1], fp[-1] + (x - xp[-1]), out)


def reuter_transform(y1, y0) -> MonotoneMap:
    """Increasing ``g`` with ``g(a_(i)) - g(b_(i)) = 1`` for all order statistics."""
    a, b = _prepare(y1, y0)
    if not np.all(a > b):
        raise DominanceViolated("treated order statistics do not all exceed control ones")
    n = a.size
    ua = np.arange(1, n + 1) / n
    if n == 1:
        f = lambda x: np.asarray(x, float) - a[0] + 1.0  # noqa: E731
    else:
        f = lambda x: _extrapolating_interp(np.asarray(x, float), a, ua)  # noqa: E731
    ub = f(b)
    # v maps f(a_(i)) -> f(b_(i)); its inverse maps back
    v_inv = lambda x: _extrapolating_interp(x, ub, ua)  # noqa: E731

    pooled = np.sort(np.concatenate([a, b]))
    u = f(pooled)
    top = ub[-1]  # v(1)
    shift = 1.0 - top
    steps = np.zeros(u.size, dtype=np.int64)
    cur = u.copy()
    active = cur <= top
    it = 0
    while active.any():
        cur[active] = v_inv(cur[active])
        steps[active] += 1
        active = cur <= top
        it += 1
        if it > _MAX_ORBIT:
            raise DominanceViolated("orbit did not leave the lower band")
    h = cur - steps * shift
    g = h / shift
    return MonotoneMap(pooled, g)


def max_gap_deviation(g: MonotoneMap, y1, y0) -> float:
    """``max_i |g(a_(i)) - g(b_(i)) - 1|``."""
    a = np.sort(np.asarray(y1, float))
    b = np.sort(np.asarray(y0, float))
    return float(np.max(np.abs(g(a) - g(b) - 1.0)))
