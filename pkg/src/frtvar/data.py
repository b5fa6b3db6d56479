"""Core domain types and science-table imputation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    BadInterceptColumn,
    DataError,
    DegenerateArm,
    IncompatibleNull,
    LengthMismatch,
    MissingValue,
)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed experiment: outcomes, binary treatment and optional blocks.

    Construct through :func:`validate_dataset`, which enforces the
    invariants; the dataclass itself does no checking.
    """

    y_obs: np.ndarray
    z: np.ndarray
    stratum: Optional[np.ndarray] = None
    x_adjust: Optional[np.ndarray] = None
    w_modifiers: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return int(self.y_obs.shape[0])

    @property
    def n_treated(self) -> int:
        return int(self.z.sum())

    @property
    def n_control(self) -> int:
        return self.n - self.n_treated

    @property
    def n_strata(self) -> int:
        return 0 if self.stratum is None else int(self.stratum.max())

    @property
    def y1(self) -> np.ndarray:
        return self.y_obs[self.z == 1]

    @property
    def y0(self) -> np.ndarray:
        return self.y_obs[self.z == 0]

    def stratum_counts(self) -> list[tuple[int, int]]:
        """Per-stratum ``(n_k, n_1k)`` pairs in label order 1..K."""
        if self.stratum is None:
            raise DataError("dataset has no strata")
        out = []
        for k in range(1, self.n_strata + 1):
            m = self.stratum == k
            out.append((int(m.sum()), int(self.z[m].sum())))
        return out

    def stratum_indicators(self) -> np.ndarray:
        """N x K indicator matrix of stratum membership (no intercept)."""
        if self.stratum is None:
            raise DataError("dataset has no strata")
        ks = np.arange(1, self.n_strata + 1)
        return (self.stratum[:, None] == ks[None, :]).astype(float)

    def with_outcomes(self, y: np.ndarray, z: Optional[np.ndarray] = None) -> "Dataset":
        """Copy with replaced outcomes (and optionally treatment); no revalidation."""
        return Dataset(
            y_obs=_frozen(np.asarray(y, dtype=float)),
            z=self.z if z is None else _frozen(np.asarray(z, dtype=np.int8)),
            stratum=self.stratum,
            x_adjust=self.x_adjust,
            w_modifiers=self.w_modifiers,
        )

    def permuted(self, order: Sequence[int]) -> "Dataset":
        """Copy with rows reordered."""
        order = np.asarray(order)
        pick = lambda a: None if a is None else _frozen(a[order])  # noqa: E731
        return Dataset(pick(self.y_obs), pick(self.z), pick(self.stratum),
                       pick(self.x_adjust), pick(self.w_modifiers))


def _is_missing(v) -> bool:
    if v is None:
        return True
    try:
        return math.isnan(v)
    except TypeError:
        return False


def _as_float_vector(values, name: str) -> np.ndarray:
    vals = list(values)
    for i, v in enumerate(vals):
        if _is_missing(v):
            raise MissingValue(f"missing value in {name} at row {i}")
    return np.asarray(vals, dtype=float)


def _as_matrix(values, name: str, n: int) -> np.ndarray:
    a = np.asarray(values, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DataError(f"{name} must be a matrix")
    if a.shape[0] != n:
        raise LengthMismatch(f"{name} has {a.shape[0]} rows, expected {n}")
    if np.isnan(a).any():
        row = int(np.argwhere(np.isnan(a))[0, 0])
        raise MissingValue(f"missing value in {name} at row {row}")
    return a


def validate_dataset(
    y_obs,
    z,
    stratum=None,
    x_adjust=None,
    w_modifiers=None,
) -> Dataset:
    """Build a :class:`Dataset`, enforcing every invariant.

    Parameters
    ----------
    y_obs : sequence of float
        Observed outcomes.
    z : sequence of {0, 1}
        Treatment indicators.
    stratum : sequence of int, optional
        Stratum labels, which must be exactly the integers ``1..K``.
    x_adjust : array_like, optional
        ``N x p`` adjustment covariates.
    w_modifiers : array_like, optional
        ``N x (k+1)`` effect-modifier design whose first column is all ones.

    Raises
    ------
    LengthMismatch, DegenerateArm, MissingValue, BadInterceptColumn
    """
    y = _as_float_vector(y_obs, "y_obs")
    zl = list(z)
    if len(zl) != y.shape[0]:
        raise LengthMismatch(f"z has length {len(zl)}, y_obs has {y.shape[0]}")
    for i, v in enumerate(zl):
        if _is_missing(v):
            raise MissingValue(f"missing value in z at row {i}")
        if v not in (0, 1):
            raise DataError(f"treatment must be 0 or 1, got {v!r} at row {i}")
    zz = np.asarray(zl, dtype=np.int8)
    n = y.shape[0]
    if n < 2:
        raise LengthMismatch("need at least two units")

    s = None
    if stratum is not None:
        sl = list(stratum)
        if len(sl) != n:
            raise LengthMismatch(f"stratum has length {len(sl)}, expected {n}")
        for i, v in enumerate(sl):
            if _is_missing(v):
                raise MissingValue(f"missing value in stratum at row {i}")
        s = np.asarray(sl)
        if not np.issubdtype(s.dtype, np.integer):
            if np.issubdtype(s.dtype, np.floating) and np.all(s == np.round(s)):
                s = s.astype(np.int64)
            else:
                raise DataError("stratum labels must be integers 1..K")
        s = s.astype(np.int64)
        labels = set(np.unique(s).tolist())
        if labels != set(range(1, len(labels) + 1)):
            raise DataError("stratum labels must be exactly the integers 1..K")

    x = None if x_adjust is None else _as_matrix(x_adjust, "x_adjust", n)
    w = None
    if w_modifiers is not None:
        w = _as_matrix(w_modifiers, "w_modifiers", n)
        if not np.all(w[:, 0] == 1.0):
            raise BadInterceptColumn("first column of w_modifiers must be all ones")

    n1 = int(zz.sum())
    if n1 == 0 or n1 == n:
        raise DegenerateArm("need at least one treated and one control unit")
    if s is not None:
        for k in range(1, int(s.max()) + 1):
            m = s == k
            nk1 = int(zz[m].sum())
            if nk1 == 0 or nk1 == int(m.sum()):
                raise DegenerateArm(f"stratum {k} lacks a treated or a control unit")

    return Dataset(
        y_obs=_frozen(y),
        z=_frozen(zz),
        stratum=None if s is None else _frozen(s),
        x_adjust=None if x is None else _frozen(x),
        w_modifiers=None if w is None else _frozen(w),
    )


# ---- designs ----------------------------------------------------------


@dataclass(frozen=True)
class CompletelyRandomized:
    n: int
    n1: int

    def __post_init__(self):
        if not 0 < self.n1 < self.n:
            raise DataError(f"need 0 < N1 < N, got N={self.n}, N1={self.n1}")


@dataclass(frozen=True, eq=False)
class Stratified:
    """Stratified design; a matched-pair design has every pair equal to (2, 1).

    ``labels`` maps each unit to its stratum (1..K).  Without it, units are
    taken to be laid out contiguously in stratum order.
    """

    pairs: tuple[tuple[int, int], ...]
    labels: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        pairs = tuple((int(a), int(b)) for a, b in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        for nk, n1k in pairs:
            if not 0 < n1k < nk:
                raise DataError(f"need 0 < n_1k < n_k, got ({nk}, {n1k})")
        if self.labels is None:
            lab = np.repeat(np.arange(1, len(pairs) + 1), [p[0] for p in pairs])
        else:
            lab = np.asarray(self.labels, dtype=np.int64)
            counts = np.bincount(lab, minlength=len(pairs) + 1)[1:]
            if len(counts) != len(pairs) or any(c != p[0] for c, p in zip(counts, pairs)):
                raise DataError("stratified totals do not match stratum labels")
        object.__setattr__(self, "labels", _frozen(lab))

    @property
    def n(self) -> int:
        return sum(p[0] for p in self.pairs)

    @property
    def n1(self) -> int:
        return sum(p[1] for p in self.pairs)


Design = Union[CompletelyRandomized, Stratified]


def design_for(dataset: Dataset, stratified: Optional[bool] = None) -> Design:
    """Design implied by the dataset's observed margins.

    Strata present -> stratified on the observed ``(n_k, n_1k)`` unless
    ``stratified=False``.
    """
    if stratified is None:
        stratified = dataset.stratum is not None
    if stratified:
        return Stratified(tuple(dataset.stratum_counts()), labels=dataset.stratum)
    return CompletelyRandomized(dataset.n, dataset.n_treated)


# ---- null models ------------------------------------------------------


@dataclass(frozen=True)
class ConstantEffect:
    tau: float

    def unit_effects(self, dataset: Dataset) -> np.ndarray:
        return np.full(dataset.n, float(self.tau))


@dataclass(frozen=True)
class LinearEffect:
    beta: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "beta", tuple(float(b) for b in np.ravel(self.beta)))

    def unit_effects(self, dataset: Dataset) -> np.ndarray:
        w = dataset.w_modifiers
        if w is None:
            raise IncompatibleNull("linear effect null needs w_modifiers")
        if w.shape[1] != len(self.beta):
            raise IncompatibleNull(
                f"beta has length {len(self.beta)}, w_modifiers has {w.shape[1]} columns"
            )
        return w @ np.asarray(self.beta)


@dataclass(frozen=True)
class StratumEffects:
    taus: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "taus", tuple(float(t) for t in np.ravel(self.taus)))

    def unit_effects(self, dataset: Dataset) -> np.ndarray:
        if dataset.stratum is None:
            raise IncompatibleNull("stratum effects null needs strata")
        if dataset.n_strata != len(self.taus):
            raise IncompatibleNull(
                f"{len(self.taus)} stratum effects for {dataset.n_strata} strata"
            )
        return np.asarray(self.taus)[dataset.stratum - 1]


NullModel = Union[ConstantEffect, LinearEffect, StratumEffects]


# ---- science table ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScienceTable:
    y0: np.ndarray
    y1: np.ndarray

    @property
    def n(self) -> int:
        return int(self.y0.shape[0])


def impute_science_table(dataset: Dataset, null: NullModel) -> ScienceTable:
    """Fill in the missing potential outcomes implied by a sharp null."""
    delta = null.unit_effects(dataset)
    y = dataset.y_obs
    treated = dataset.z == 1
    y0 = np.where(treated, y - delta, y)
    y1 = np.where(treated, y, y + delta)
    return ScienceTable(_frozen(y0), _frozen(y1))


def realize_outcomes(table: ScienceTable, assignment) -> np.ndarray:
    """Observed outcomes that ``assignment`` would reveal from ``table``."""
    a = np.asarray(assignment)
    if a.shape[-1] != table.n:
        raise LengthMismatch(f"assignment has length {a.shape[-1]}, table has {table.n}")
    return np.where(a == 1, table.y1, table.y0)
