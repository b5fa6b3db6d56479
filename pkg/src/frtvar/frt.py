"""Fisher randomization tests under sharp nulls and nuisance-maximised p-values."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .data import (
    CompletelyRandomized,
    ConstantEffect,
    Dataset,
    Design,
    LinearEffect,
    NullModel,
    Stratified,
    StratumEffects,
    design_for,
    impute_science_table,
)
from .errors import ConfigError, DegenerateArm, EmptyGrid, IncompatibleNull
from .linmod import Ellipsoid, Interval, NuisanceRegion, nuisance_region, point_estimate
from .rng import as_seed
from .stats import StatisticSpec

EXHAUSTIVE_THRESHOLD = 100_000
DEFAULT_R = 999
DEFAULT_GAMMA = 0.001
DEFAULT_SEED = 20160815
# ties closer than this (relative) count toward the rejection region
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class FrtResult:
    observed_stat: float
    p_value: float
    draws: int
    mode: str
    mc_standard_error: float
    seed: int
    statistic: str = ""

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "observed_stat": self.observed_stat,
            "p_value": self.p_value,
            "draws": self.draws,
            "mode": self.mode,
            "mc_standard_error": self.mc_standard_error,
            "seed": self.seed,
        }


@dataclass(frozen=True, eq=False)
class PValueCurve:
    """Pointwise p-values over a grid filling the nuisance region."""

    nuisance: np.ndarray
    p_values: np.ndarray
    region: NuisanceRegion
    gamma: float
    observed_stat: float
    center_index: int
    draws: int
    mode: str
    seed: int
    statistic: str = ""
    oracle: Optional[tuple[np.ndarray, float]] = field(default=None)

    @property
    def points(self) -> list[tuple[np.ndarray, float]]:
        return list(zip(self.nuisance, self.p_values.tolist()))

    @property
    def sup_p(self) -> float:
        return float(self.p_values.max())

    @property
    def p_gamma(self) -> float:
        return min(1.0, self.sup_p + self.gamma)

    @property
    def plug_in_p(self) -> float:
        return float(self.p_values[self.center_index])

    @property
    def argmax(self) -> np.ndarray:
        return self.nuisance[int(np.argmax(self.p_values))]

    def max_is_interior(self) -> bool:
        """True when no grid point on the region boundary attains the sup."""
        at_max = self.p_values == self.p_values.max()
        return not bool(np.any(at_max & self.boundary_mask()))

    def boundary_mask(self) -> np.ndarray:
        if isinstance(self.region, Interval):
            v = self.nuisance[:, 0]
            return (v == v.min()) | (v == v.max())
        # lattice points with a missing neighbour in the grid lie on the edge
        pts = {tuple(p) for p in np.round(self.nuisance, 12)}
        steps = _lattice_steps(self.nuisance)
        mask = np.zeros(len(self.nuisance), dtype=bool)
        for i, p in enumerate(self.nuisance):
            for ax, s in enumerate(steps):
                for sign in (-1, 1):
                    q = p.copy()
                    q[ax] += sign * s
                    if tuple(np.round(q, 12)) not in pts:
                        mask[i] = True
        return mask

    def to_dict(self) -> dict:
        d = {
            "statistic": self.statistic,
            "observed_stat": self.observed_stat,
            "region": self.region.to_dict(),
            "grid_size": int(len(self.p_values)),
            "points": [
                {"nuisance": [float(x) for x in v], "p": float(p)}
                for v, p in zip(self.nuisance, self.p_values)
            ],
            "sup_p": self.sup_p,
            "p_gamma": self.p_gamma,
            "p_plug_in": self.plug_in_p,
            "plug_in": [float(x) for x in self.nuisance[self.center_index]],
            "gamma": self.gamma,
            "draws": self.draws,
            "mode": self.mode,
            "seed": self.seed,
        }
        if self.oracle is not None:
            d["oracle"] = {"nuisance": [float(x) for x in self.oracle[0]], "p": self.oracle[1]}
        return d


def _lattice_steps(pts: np.ndarray) -> list[float]:
    steps = []
    for ax in range(pts.shape[1]):
        u = np.unique(np.round(pts[:, ax], 12))
        steps.append(float(np.min(np.diff(u))) if u.size > 1 else 1.0)
    return steps


# ---- assignment mechanism -----------------------------------------------


def assignment_space(design: Design) -> int:
    """Number of equally likely assignments under the design."""
    if isinstance(design, CompletelyRandomized):
        return math.comb(design.n, design.n1)
    return math.prod(math.comb(nk, n1k) for nk, n1k in design.pairs)


def _blocks(design: Design):
    if isinstance(design, CompletelyRandomized):
        return (np.arange(design.n, dtype=np.int64), np.array([0, design.n], dtype=np.int64),
                np.array([design.n1], dtype=np.int64), design.n)
    labels = design.labels
    units = np.argsort(labels, kind="stable").astype(np.int64)
    sizes = [p[0] for p in design.pairs]
    starts = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
    return units, starts, np.array([p[1] for p in design.pairs], dtype=np.int64), design.n


def _split(count: int, threads: int) -> list[tuple[int, int]]:
    threads = max(1, min(int(threads or 1), count))
    edges = np.linspace(0, count, threads + 1).astype(int)
    return [(int(a), int(b - a)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def draw_assignments(design: Design, seed: int, count: int, start: int = 0,
                     threads: int = 1) -> np.ndarray:
    """Rows ``start .. start+count-1`` of the design's assignment stream.

    Row ``d`` is a pure function of ``(seed, d)``.
    """
    units, starts, n1s, n = _blocks(design)
    s = np.uint64(as_seed(seed))
    parts = _split(count, threads)
    run = lambda p: _kernels.draw_block(s, start + p[0], p[1], units, starts, n1s, n)  # noqa: E731
    if len(parts) == 1:
        return run(parts[0])
    with ThreadPoolExecutor(len(parts)) as ex:
        return np.concatenate(list(ex.map(run, parts)))


def draw_assignment(design: Design, draw_index: int, seed: int) -> np.ndarray:
    return draw_assignments(design, seed, 1, start=draw_index)[0]


def enumerate_assignments(design: Design) -> np.ndarray:
    """Every assignment the design allows, one per row."""
    units, starts, n1s, n = _blocks(design)
    per_block = []
    for k in range(len(n1s)):
        members = units[starts[k]:starts[k + 1]]
        per_block.append(list(itertools.combinations(members.tolist(), int(n1s[k]))))
    total = math.prod(len(b) for b in per_block)
    out = np.zeros((total, n), dtype=np.int8)
    for r, combo in enumerate(itertools.product(*per_block)):
        for chosen in combo:
            out[r, list(chosen)] = 1
    return out


def _check_design(dataset: Dataset, design: Design):
    if design.n != dataset.n:
        raise ConfigError(f"design has {design.n} units, dataset has {dataset.n}")
    if isinstance(design, Stratified):
        if dataset.stratum is not None and not np.array_equal(design.labels, dataset.stratum):
            raise ConfigError("design strata do not match dataset strata")
        n1 = [int(dataset.z[design.labels == k].sum()) for k in range(1, len(design.pairs) + 1)]
        if n1 != [p[1] for p in design.pairs]:
            raise ConfigError("observed assignment is not in the design's support")
    elif dataset.n_treated != design.n1:
        raise ConfigError("observed assignment is not in the design's support")


def _resolve_mode(design: Design, mode: str) -> str:
    if mode == "auto":
        return "exhaustive" if assignment_space(design) <= EXHAUSTIVE_THRESHOLD else "monte_carlo"
    if mode not in ("exhaustive", "monte_carlo"):
        raise ConfigError(f"unknown mode {mode!r}")
    return mode


def _assignments(design: Design, mode: str, R: int, seed: int, threads: int) -> np.ndarray:
    if mode == "exhaustive":
        return enumerate_assignments(design)
    if R < 1:
        raise ConfigError("R must be at least 1")
    return draw_assignments(design, seed, R, threads=threads)


# ---- core test ----------------------------------------------------------


def _reference(stat: StatisticSpec, dataset, table, A, threads):
    parts = _split(A.shape[0], threads)
    run = lambda p: stat.reference_values(dataset, table, A[p[0]:p[0] + p[1]])  # noqa: E731
    if len(parts) == 1:
        return run(parts[0])
    with ThreadPoolExecutor(len(parts)) as ex:
        return np.concatenate(list(ex.map(run, parts)))


def _pvalue_from_assignments(dataset, null, stat, A, mode, threads):
    table = impute_science_table(dataset, null)
    t = float(stat.orient(stat.reference_values(dataset, table, dataset.z[None, :]))[0])
    if not np.isfinite(t):
        raise DegenerateArm(f"{stat.name} is undefined on the observed data")
    ref = stat.orient(_reference(stat, dataset, table, A, threads))
    if np.isnan(ref).any():
        raise DegenerateArm(f"{stat.name} is undefined under some assignments")
    hits = int(np.count_nonzero(ref >= t - TIE_RTOL * abs(t)))
    R = A.shape[0]
    if mode == "exhaustive":
        return t, hits / R
    return t, (1 + hits) / (R + 1)


def _result(t, p, R, mode, seed, stat):
    se = 0.0 if mode == "exhaustive" else math.sqrt(p * (1 - p) / R)
    return FrtResult(float(t), float(p), int(R), mode, float(se), int(seed), stat.name)


def frt_pvalue(
    dataset: Dataset,
    null: NullModel,
    stat: StatisticSpec,
    design: Optional[Design] = None,
    R: int = DEFAULT_R,
    seed: int = DEFAULT_SEED,
    mode: str = "auto",
    threads: int = 1,
) -> FrtResult:
    """Randomization p-value of ``stat`` under a sharp null.

    Monte Carlo mode uses ``(1 + #{t_ref >= t}) / (R + 1)``; exhaustive mode
    the exact fraction over all assignments (the observed one included).
    """
    design = design_for(dataset) if design is None else design
    _check_design(dataset, design)
    stat.check(dataset)
    mode = _resolve_mode(design, mode)
    seed = as_seed(seed)
    A = _assignments(design, mode, R, seed, threads)
    t, p = _pvalue_from_assignments(dataset, null, stat, A, mode, threads)
    return _result(t, p, A.shape[0], mode, seed, stat)


def null_for(family: str, value) -> NullModel:
    v = np.ravel(np.asarray(value, dtype=float))
    if family == "constant":
        return ConstantEffect(float(v[0]))
    if family == "linear":
        return LinearEffect(tuple(v))
    if family == "stratum":
        return StratumEffects(tuple(v))
    raise ConfigError(f"unknown null family {family!r}")


def frt_pi(
    dataset: Dataset,
    stat: StatisticSpec,
    design: Optional[Design] = None,
    R: int = DEFAULT_R,
    seed: int = DEFAULT_SEED,
    null_family: str = "constant",
    use_x: bool = False,
    mode: str = "auto",
    threads: int = 1,
) -> FrtResult:
    """Plug-in FRT: the sharp null at the estimated nuisance parameter."""
    est = point_estimate(dataset, null_family, use_x=use_x)
    return frt_pvalue(dataset, null_for(null_family, est), stat, design, R, seed, mode, threads)


@dataclass(frozen=True)
class GridSpec:
    """Resolution of the nuisance grid: ``points`` for intervals, ``per_axis`` for ellipsoids."""

    points: int = 41
    per_axis: int = 11

    def __post_init__(self):
        if self.points < 1 or self.per_axis < 1:
            raise EmptyGrid("grid resolution must be positive")


def nuisance_grid(region: NuisanceRegion, spec: GridSpec = GridSpec()) -> tuple[np.ndarray, int]:
    """Grid points over the region and the index of its center."""
    if isinstance(region, Interval):
        c = region.center
        if spec.points == 1:
            return np.array([[c]]), 0
        vals = np.linspace(region.lo, region.hi, spec.points)
        if spec.points % 2 == 1:
            vals[spec.points // 2] = c
        else:
            vals = np.sort(np.append(vals, c))
        return vals[:, None], int(np.flatnonzero(vals == c)[0])
    if isinstance(region, Ellipsoid):
        m = spec.per_axis
        axes = [np.linspace(-1.0, 1.0, m) for _ in range(region.dim)]
        if m % 2 == 1:
            for a in axes:
                a[m // 2] = 0.0
        hw = region.half_widths()
        lattice = np.array(list(itertools.product(*axes))).reshape(-1, region.dim)
        pts = region.center + lattice * hw
        keep = region.distance2(pts) <= region.radius2 * (1 + 1e-12)
        pts = pts[keep]
        is_center = np.all(pts == region.center, axis=1)
        if not is_center.any():
            pts = np.vstack([pts, region.center])
            is_center = np.append(is_center, True)
        if len(pts) == 0:
            raise EmptyGrid("no grid points inside the region")
        return pts, int(np.flatnonzero(is_center)[0])
    raise ConfigError("unknown region type")


def frt_ci(
    dataset: Dataset,
    stat: StatisticSpec,
    design: Optional[Design] = None,
    R: int = DEFAULT_R,
    seed: int = DEFAULT_SEED,
    gamma: float = DEFAULT_GAMMA,
    grid_spec: GridSpec = GridSpec(),
    null_family: str = "constant",
    use_x: bool = False,
    covariance: str = "HC2",
    mode: str = "auto",
    threads: int = 1,
    region: Optional[NuisanceRegion] = None,
    oracle_value: Optional[Sequence[float]] = None,
) -> PValueCurve:
    """Maximise the FRT p-value over a ``1 - gamma`` region, then add ``gamma``.

    All grid points share one set of assignments, so the plug-in p-value is
    exactly the curve's value at the region center.  ``oracle_value``
    optionally evaluates one extra (true) parameter value for reporting.
    """
    if not 0 < gamma < 1:
        raise ConfigError("gamma must lie in (0, 1)")
    design = design_for(dataset) if design is None else design
    _check_design(dataset, design)
    stat.check(dataset)
    if region is None:
        region = nuisance_region(dataset, null_family, gamma, use_x=use_x, covariance=covariance)
    pts, ci = nuisance_grid(region, grid_spec)
    mode = _resolve_mode(design, mode)
    seed = as_seed(seed)
    A = _assignments(design, mode, R, seed, threads)
    pvals = np.empty(len(pts))
    t_obs = None
    for g, v in enumerate(pts):
        t, p = _pvalue_from_assignments(dataset, null_for(null_family, v), stat, A, mode, threads)
        pvals[g] = p
        t_obs = t if g == ci else t_obs
    oracle = None
    if oracle_value is not None:
        ov = np.ravel(np.asarray(oracle_value, dtype=float))
        _, p = _pvalue_from_assignments(dataset, null_for(null_family, ov), stat, A, mode, threads)
        oracle = (ov, float(p))
    return PValueCurve(pts, pvals, region, float(gamma), float(t_obs), ci, int(A.shape[0]),
                       mode, int(seed), stat.name, oracle)


def conditional_frt(
    dataset: Dataset,
    null: NullModel,
    stat: StatisticSpec,
    R: int = DEFAULT_R,
    seed: int = DEFAULT_SEED,
    mode: str = "auto",
    threads: int = 1,
) -> FrtResult:
    """FRT conditional on the observed per-stratum treated counts."""
    if dataset.stratum is None:
        raise IncompatibleNull("conditional randomization needs strata")
    design = Stratified(tuple(dataset.stratum_counts()), labels=dataset.stratum)
    return frt_pvalue(dataset, null, stat, design, R, seed, mode, threads)
