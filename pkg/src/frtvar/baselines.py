"""Non-randomization comparison methods for the constant-effect null."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import _kernels
from .errors import ConfigError, DomainError, EmptySample, SampleTooSmall
from .rng import as_seed
from .stats import kvar_statistic, sks_statistic

DEFAULT_B = 1000
DEFAULT_S = 500
_TERM_TOL = 1e-12


@dataclass(frozen=True)
class BaselineResult:
    method: str
    statistic: float
    p_value: float
    replicates: int

    def to_dict(self) -> dict:
        return {"method": self.method, "statistic": self.statistic,
                "p_value": self.p_value, "replicates": self.replicates}


def kolmogorov_cdf(x: float) -> float:
    """Limiting CDF of the scaled two-sample KS statistic.

    Uses ``1 - 2 sum (-1)^(k-1) exp(-2 k^2 x^2)`` for ``x >= 1`` and the
    equivalent theta-function series ``sqrt(2 pi)/x sum exp(-(2k-1)^2 pi^2 / (8 x^2))``
    below, where the alternating form loses everything to cancellation.
    Both series stop once a term drops below 1e-12.
    """
    x = float(x)
    if not x > 0:
        raise DomainError("kolmogorov_cdf needs x > 0")
    if x < 1.0:
        c = -(math.pi**2) / (8 * x * x)
        total = 0.0
        k = 1
        while True:
            term = math.exp(c * (2 * k - 1) ** 2)
            total += term
            if term < _TERM_TOL * max(total, 1e-300) or term == 0.0:
                break
            k += 1
        return min(1.0, math.sqrt(2 * math.pi) / x * total)
    total = 0.0
    k = 1
    while True:
        term = math.exp(-2.0 * k * k * x * x)
        total += term if k % 2 == 1 else -term
        if term < _TERM_TOL:
            break
        k += 1
    return min(1.0, max(0.0, 1.0 - 2.0 * total))


def _arms(y1, y0):
    a = np.asarray(y1, dtype=float).ravel()
    b = np.asarray(y0, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptySample("both arms need at least one unit")
    return a, b


def _ge_count(values, t):
    return int(np.count_nonzero(values >= t - 1e-12 * abs(t)))


def naive_plugin_pvalue(y1, y0) -> BaselineResult:
    """Classical KS p-value for the shifted statistic, ignoring estimation of the shift.

    Not a valid test in general; kept to show how it fails.
    """
    a, b = _arms(y1, y0)
    t = sks_statistic(a, b)
    x = math.sqrt(a.size * b.size / (a.size + b.size)) * t
    p = 1.0 if x <= 0 else 1.0 - kolmogorov_cdf(x)
    return BaselineResult("NAIVE_PLUGIN", t, float(p), 0)


def _chunked(fn, count, threads):
    threads = max(1, min(int(threads or 1), count))
    edges = np.linspace(0, count, threads + 1).astype(int)
    parts = [(int(s), int(e - s)) for s, e in zip(edges[:-1], edges[1:]) if e > s]
    if len(parts) == 1:
        return fn(*parts[0])
    with ThreadPoolExecutor(len(parts)) as ex:
        return np.concatenate(list(ex.map(lambda p: fn(*p), parts)))


def bootstrap_pvalue(y1, y0, B: int = DEFAULT_B, seed: int = 0, threads: int = 1) -> BaselineResult:
    """Pooled-residual bootstrap of the shifted KS statistic.

    Residuals are demeaned within arm and pooled; each replicate draws
    ``N1 + N0`` of them with replacement, the first ``N1`` acting as treated.
    """
    a, b = _arms(y1, y0)
    if B < 1:
        raise SampleTooSmall("need at least one bootstrap replicate")
    t = sks_statistic(a, b)
    pool = np.concatenate([a - a.mean(), b - b.mean()])
    s = np.uint64(as_seed(seed))
    stars = _chunked(
        lambda start, cnt: _kernels.resample_sks_block(pool, s, start, cnt, a.size, pool.size),
        B, threads,
    )
    p = (1 + _ge_count(stars, t)) / (B + 1)
    return BaselineResult("BOOTSTRAP", t, float(p), int(B))


def subsample_size(n: int) -> int:
    return int(round(20 + n ** 0.25))


SUBSAMPLING_VARIANTS = ("quantile", "ks_at_tau")
QP_LEVELS = np.linspace(0.1, 0.9, 17)


def quantile_deviation(y1, y0, q=QP_LEVELS) -> np.ndarray:
    """``v(q) = tau(q) - tau`` with left-inverse empirical quantiles and the mean difference."""
    a, b = np.sort(np.asarray(y1, float)), np.sort(np.asarray(y0, float))
    q = np.asarray(q, float)
    return _kernels.left_quantiles(a, q) - _kernels.left_quantiles(b, q) - (a.mean() - b.mean())


def subsampling_pvalue(y1, y0, S: int = DEFAULT_S, seed: int = 0, threads: int = 1,
                       variant: str = "quantile") -> BaselineResult:
    """Recentered subsampling test of a constant effect.

    Subsamples have ``b = round(20 + n^(1/4))`` units with the treated share
    of the full sample, drawn without replacement within arm, and
    ``sqrt(n) t`` is referred to the distribution of ``sqrt(b) t_b``.

    ``variant="quantile"`` (default) uses ``t = sup_q |v(q)|`` over
    ``q = 0.10, 0.15, ..., 0.90`` with ``v(q) = tau(q) - tau``; each
    subsample statistic is ``sup_q |v_b(q) - v(q)|``, the subsample process
    recentered by the full-sample one.  ``variant="ks_at_tau"`` uses the
    shifted KS statistic and scores every subsample with the KS distance at
    the full-sample mean difference.
    """
    if variant not in SUBSAMPLING_VARIANTS:
        raise ConfigError(f"unknown subsampling variant {variant!r}")
    a, b = _arms(y1, y0)
    n = a.size + b.size
    bsz = subsample_size(n)
    if bsz >= n:
        raise SampleTooSmall(f"subsample size {bsz} is not below n={n}")
    b1 = int(round(bsz * a.size / n))
    b0 = bsz - b1
    if b1 < 1 or b0 < 1 or b1 > a.size or b0 > b.size:
        raise SampleTooSmall("a subsample arm would be empty or exceed its arm")
    s = np.uint64(as_seed(seed))
    if variant == "quantile":
        full = quantile_deviation(a, b)
        t = float(np.max(np.abs(full)))
        subs = _chunked(
            lambda start, cnt: _kernels.subsample_qp_block(a, b, b1, b0, QP_LEVELS, full, s,
                                                           start, cnt),
            S, threads,
        )
    else:
        tau = a.mean() - b.mean()
        t = sks_statistic(a, b)
        subs = _chunked(
            lambda start, cnt: _kernels.subsample_ks_block(a, b, b1, b0, tau, s, start, cnt),
            S, threads,
        )
    obs = math.sqrt(n) * t
    p = (1 + _ge_count(math.sqrt(bsz) * subs, obs)) / (S + 1)
    return BaselineResult("SUBSAMPLING", t, float(p), int(S))


def kvar_asymptotic_pvalue(y1, y0) -> BaselineResult:
    """Two-sided normal-reference p-value for the kurtosis-corrected variance test."""
    a, b = _arms(y1, y0)
    t = kvar_statistic(a, b)
    p = 2.0 * special.ndtr(-abs(t))
    return BaselineResult("KVAR_ASYMPTOTIC", t, float(min(1.0, p)), 0)
