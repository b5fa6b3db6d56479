"""Empirical CDFs and the treatment-effect-variation test statistics.

Every KS-type statistic is the exact supremum of a difference of step
functions, taken over the union of both samples' breakpoints (a sweep over
the merged sorted samples).  Points within a few ulps of each other are
treated as tied, so exact alignments survive floating-point shifts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .data import Dataset, ScienceTable, realize_outcomes
from .errors import (
    ConfigError,
    DegenerateArm,
    DegenerateKurtosis,
    DegenerateVariance,
    EmptySample,
)


def _vec(values, name="sample") -> np.ndarray:
    a = np.asarray(values, dtype=float).ravel()
    if a.size == 0:
        raise EmptySample(f"{name} is empty")
    return a


@dataclass(frozen=True, eq=False)
class EmpiricalCdf:
    """Right-continuous step function with jumps at ``support``."""

    support: np.ndarray
    cum_probs: np.ndarray

    def __call__(self, y):
        idx = np.searchsorted(self.support, y, side="right")
        probs = np.concatenate(([0.0], self.cum_probs))
        return probs[idx]

    def left_limit(self, y):
        idx = np.searchsorted(self.support, y, side="left")
        probs = np.concatenate(([0.0], self.cum_probs))
        return probs[idx]

    def quantile(self, q):
        """Left-continuous generalized inverse ``inf{y : F(y) >= q}``."""
        q = np.asarray(q, dtype=float)
        # guard the comparison against rounding in cum_probs
        idx = np.searchsorted(self.cum_probs, q - 1e-12, side="left")
        return self.support[np.minimum(idx, self.support.size - 1)]


def empirical_cdf(values) -> EmpiricalCdf:
    a = _vec(values)
    support, counts = np.unique(a, return_counts=True)
    cum = np.cumsum(counts) / a.size
    cum[-1] = 1.0
    return EmpiricalCdf(support, cum)


def ks_at_tau(y1, y0, tau: float) -> float:
    """``max_y |F0(y) - F1(y + tau)|``."""
    a = np.sort(_vec(y1, "treated sample"))
    b = np.sort(_vec(y0, "control sample"))
    return _kernels.ks_sorted_count(a, a.size, b, b.size, float(tau)) / (a.size * b.size)


def sks_statistic(y1, y0) -> float:
    """Shifted KS: :func:`ks_at_tau` at the difference in means."""
    a = _vec(y1, "treated sample")
    b = _vec(y0, "control sample")
    return ks_at_tau(a, b, a.mean() - b.mean())


def variance_ratio(y1, y0) -> float:
    a = _vec(y1, "treated sample")
    b = _vec(y0, "control sample")
    if a.size < 2 or b.size < 2:
        raise DegenerateVariance("variance needs at least two values per arm")
    v0 = b.var(ddof=1)
    if v0 == 0:
        raise DegenerateVariance("control variance is zero")
    return float(a.var(ddof=1) / v0)


def sample_kurtosis(values) -> float:
    """Moment ratio ``m4 / m2**2`` with divisor-n central moments."""
    a = _vec(values)
    if a.size < 4:
        raise DegenerateVariance("kurtosis needs at least four values")
    d = a - a.mean()
    m2 = np.mean(d**2)
    if m2 == 0:
        raise DegenerateVariance("sample has zero variance")
    return float(np.mean(d**4) / m2**2)


def kvar_statistic(y1, y0) -> float:
    """Kurtosis-corrected log variance ratio, asymptotically N(0, 1)."""
    a = _vec(y1, "treated sample")
    b = _vec(y0, "control sample")
    if a.size < 4 or b.size < 4:
        raise DegenerateVariance("kvar needs at least four values per arm")
    k1 = sample_kurtosis(a)
    k0 = sample_kurtosis(b)
    rad = (k1 - 1) / a.size + (k0 - 1) / b.size
    if not rad > 1e-14:
        raise DegenerateKurtosis("kurtosis correction is not positive")
    return float((np.log(a.var(ddof=1)) - np.log(b.var(ddof=1))) / np.sqrt(rad))


def quantile_process_stat(y1, y0, norm: str = "sup", m: Optional[int] = None) -> float:
    """Distance between the quantile treatment effects and the mean effect.

    Quantile effects are evaluated on ``q_j = j / (m + 1)``,
    ``j = 1..m`` (default ``m = min(N1, N0)``).
    """
    a = _vec(y1, "treated sample")
    b = _vec(y0, "control sample")
    if m is None:
        m = min(a.size, b.size)
    if m < 2:
        raise ConfigError("quantile grid needs at least two points")
    q = np.arange(1, m + 1) / (m + 1)
    gap = empirical_cdf(a).quantile(q) - empirical_cdf(b).quantile(q)
    dev = np.abs(gap - (a.mean() - b.mean()))
    if norm == "sup":
        return float(dev.max())
    if norm == "L1":
        return float(dev.mean())
    raise ConfigError(f"unknown norm {norm!r}")


def rks_statistic(dataset: Dataset, residuals) -> float:
    """KS distance between treated and control residual CDFs."""
    e = np.asarray(residuals, dtype=float)
    z = dataset.z
    return ks_at_tau(e[z == 1], e[z == 0], 0.0)


def _check_strata(dataset: Dataset):
    if dataset.stratum is None:
        raise DegenerateArm("statistic requires strata")
    for k, (nk, n1k) in enumerate(dataset.stratum_counts(), start=1):
        if n1k == 0 or n1k == nk:
            raise DegenerateArm(f"stratum {k} lacks a treated or a control unit")


def wsks_statistic(dataset: Dataset) -> float:
    """``sum_k (n_k / n) * t_SKS,k``."""
    _check_strata(dataset)
    total = 0.0
    for k in range(1, dataset.n_strata + 1):
        m = dataset.stratum == k
        y, z = dataset.y_obs[m], dataset.z[m]
        total += m.sum() / dataset.n * sks_statistic(y[z == 1], y[z == 0])
    return float(total)


def _poststrat_weights(stratum: np.ndarray, z: np.ndarray, n_strata: int):
    """Signed per-unit weights ``+-(n_k/n)/n_kz`` for the mixture CDF difference."""
    n = z.shape[-1]
    w = np.empty(z.shape, dtype=float)
    for k in range(1, n_strata + 1):
        m = stratum == k
        nk = m.sum()
        n1k = (z[..., m] == 1).sum(axis=-1, keepdims=True)
        n0k = nk - n1k
        with np.errstate(divide="ignore"):
            wt = np.where(z[..., m] == 1, nk / n / n1k, -nk / n / n0k)
        w[..., m] = wt
    return w


def _stratum_arm_demean(y: np.ndarray, z: np.ndarray, stratum: np.ndarray, n_strata: int):
    e = np.array(y, dtype=float, copy=True)
    for k in range(1, n_strata + 1):
        for arm in (0, 1):
            m = (stratum == k) & (z == arm)
            if m.any():
                e[m] = y[m] - y[m].mean()
    return e


def poststrat_sks(dataset: Dataset) -> float:
    """KS distance between post-stratified mixtures of demeaned outcomes."""
    _check_strata(dataset)
    e = _stratum_arm_demean(dataset.y_obs, dataset.z, dataset.stratum, dataset.n_strata)
    w = _poststrat_weights(dataset.stratum, dataset.z, dataset.n_strata)
    return float(_kernels.weighted_sweep_block(e[None, :], w[None, :])[0])


# ---- statistic specification --------------------------------------------

KINDS = ("SKS", "KS_AT_TAU", "VAR_RATIO", "KVAR", "QP", "RKS", "WSKS", "POSTSTRAT_SKS")


@dataclass(frozen=True)
class StatisticSpec:
    """Which statistic to compute, plus its parameters.

    Use the classmethod constructors rather than building one by hand.
    """

    kind: str
    tau: float = 0.0
    norm: str = "sup"
    grid_size: Optional[int] = None
    use_x: bool = False
    interact_w: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown statistic {self.kind!r}")
        if self.kind == "QP":
            if self.norm not in ("sup", "L1"):
                raise ConfigError(f"unknown norm {self.norm!r}")
            if self.grid_size is not None and self.grid_size < 2:
                raise ConfigError("quantile grid needs at least two points")

    @classmethod
    def sks(cls):
        return cls("SKS")

    @classmethod
    def ks_at(cls, tau: float):
        return cls("KS_AT_TAU", tau=float(tau))

    @classmethod
    def var_ratio(cls):
        return cls("VAR_RATIO")

    @classmethod
    def kvar(cls):
        return cls("KVAR")

    @classmethod
    def qp(cls, norm: str = "sup", grid_size: Optional[int] = None):
        return cls("QP", norm=norm, grid_size=grid_size)

    @classmethod
    def rks(cls, use_x: bool = False, interact_w: bool = False):
        return cls("RKS", use_x=use_x, interact_w=interact_w)

    @classmethod
    def wsks(cls):
        return cls("WSKS")

    @classmethod
    def poststrat(cls):
        return cls("POSTSTRAT_SKS")

    @property
    def name(self) -> str:
        if self.kind == "KS_AT_TAU":
            return f"KS_AT_TAU({self.tau:g})"
        if self.kind == "QP":
            return f"QP({self.norm})"
        if self.kind == "RKS":
            return f"RKS(x={int(self.use_x)},w={int(self.interact_w)})"
        return self.kind

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "tau": self.tau,
            "norm": self.norm,
            "grid_size": self.grid_size,
            "use_x": self.use_x,
            "interact_w": self.interact_w,
        }

    def check(self, dataset: Dataset):
        """Raise if the dataset lacks the blocks this statistic needs."""
        if self.kind == "RKS":
            if self.use_x and dataset.x_adjust is None:
                raise ConfigError("RKS with use_x needs x_adjust")
            if self.interact_w and dataset.w_modifiers is None:
                raise ConfigError("RKS with interact_w needs w_modifiers")
        if self.kind in ("WSKS", "POSTSTRAT_SKS") and dataset.stratum is None:
            raise ConfigError(f"{self.kind} needs strata")

    # larger is always more extreme after orientation
    def orient(self, values):
        values = np.asarray(values, dtype=float)
        if self.kind == "VAR_RATIO":
            with np.errstate(divide="ignore"):
                return np.maximum(values, 1.0 / values)
        if self.kind == "KVAR":
            return np.abs(values)
        return values

    def evaluate(self, dataset: Dataset) -> float:
        """Raw statistic on the dataset's observed outcomes."""
        self.check(dataset)
        y, z = dataset.y_obs, dataset.z
        y1, y0 = y[z == 1], y[z == 0]
        k = self.kind
        if k == "SKS":
            return sks_statistic(y1, y0)
        if k == "KS_AT_TAU":
            return ks_at_tau(y1, y0, self.tau)
        if k == "VAR_RATIO":
            return variance_ratio(y1, y0)
        if k == "KVAR":
            return kvar_statistic(y1, y0)
        if k == "QP":
            return quantile_process_stat(y1, y0, self.norm, self.grid_size)
        if k == "RKS":
            from .linmod import residualize

            e, _ = residualize(dataset, use_x=self.use_x, interact_w=self.interact_w)
            return rks_statistic(dataset, e)
        if k == "WSKS":
            return wsks_statistic(dataset)
        return poststrat_sks(dataset)

    def reference_values(
        self, dataset: Dataset, table: ScienceTable, assignments: np.ndarray
    ) -> np.ndarray:
        """Raw statistic for every assignment row, revealed from ``table``.

        NaN marks an assignment under which the statistic is undefined.
        """
        A = np.ascontiguousarray(assignments, dtype=np.int8)
        k = self.kind
        if k in ("SKS", "KS_AT_TAU"):
            o1 = np.argsort(table.y1, kind="stable")
            o0 = np.argsort(table.y0, kind="stable")
            return _kernels.sks_table_block(
                np.ascontiguousarray(table.y1[o1]),
                np.ascontiguousarray(A[:, o1]),
                np.ascontiguousarray(table.y0[o0]),
                np.ascontiguousarray(A[:, o0]),
                float(self.tau),
                k == "KS_AT_TAU",
            )
        if k == "WSKS":
            s = dataset.stratum
            o1 = np.lexsort((table.y1, s))
            o0 = np.lexsort((table.y0, s))
            counts = np.bincount(s, minlength=dataset.n_strata + 1)[1:]
            bounds = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
            return _kernels.wsks_table_block(
                np.ascontiguousarray(table.y1[o1]),
                np.ascontiguousarray(A[:, o1]),
                np.ascontiguousarray(table.y0[o0]),
                np.ascontiguousarray(A[:, o0]),
                bounds,
            )
        Y = realize_outcomes(table, A)
        if k == "RKS":
            from .linmod import batch_residuals

            E = batch_residuals(dataset, Y, A, use_x=self.use_x, interact_w=self.interact_w)
            return _kernels.ks_groups_block(np.ascontiguousarray(E), A)
        if k == "POSTSTRAT_SKS":
            s, K = dataset.stratum, dataset.n_strata
            W = _poststrat_weights(s, A, K)
            bad = ~np.isfinite(W).all(axis=1)
            E = np.empty_like(Y)
            for r in range(Y.shape[0]):
                E[r] = _stratum_arm_demean(Y[r], A[r], s, K)
            W[bad] = 0.0
            out = _kernels.weighted_sweep_block(E, W)
            out[bad] = np.nan
            return out
        if k == "VAR_RATIO":
            N1 = A.sum(axis=1)
            out = np.full(A.shape[0], np.nan)
            for r in range(A.shape[0]):
                if 2 <= N1[r] <= A.shape[1] - 2:
                    y, z = Y[r], A[r]
                    v0 = y[z == 0].var(ddof=1)
                    if v0 > 0:
                        out[r] = y[z == 1].var(ddof=1) / v0
            return out
        out = np.empty(A.shape[0])
        for r in range(A.shape[0]):
            y, z = Y[r], A[r]
            try:
                if k == "KVAR":
                    out[r] = kvar_statistic(y[z == 1], y[z == 0])
                else:
                    out[r] = quantile_process_stat(y[z == 1], y[z == 0], self.norm, self.grid_size)
            except (DegenerateVariance, DegenerateKurtosis, EmptySample):
                out[r] = np.nan
        return out
