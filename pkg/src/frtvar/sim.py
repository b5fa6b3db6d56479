"""Data-generating processes and replication drivers for size, power and curve studies."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

from . import baselines
from .data import CompletelyRandomized, Dataset, ScienceTable, Stratified, validate_dataset
from .errors import ConfigError, EmptyGrid
from .frt import DEFAULT_GAMMA, GridSpec, PValueCurve, draw_assignments, frt_ci
from .linmod import nuisance_region
from .rng import as_seed, derive_seed, uniforms
from .stats import StatisticSpec

FAMILIES = ("NORMAL_NULL", "T5_NULL", "EXPO_NULL", "LOGNORMAL_NULL", "CFV_NORMAL", "CFV_LOGNORMAL")
METHODS = ("FRT_PI", "FRT_CI", "SUBSAMPLING", "BOOTSTRAP", "NAIVE_PLUGIN", "KVAR")

# sub-stream ids under a replicate seed
_OUTCOME_STREAM = 0
_ASSIGN_STREAM = 1
_METHOD_STREAM = {m: 10 + i for i, m in enumerate(METHODS)}


@dataclass(frozen=True)
class DgpSpec:
    """Outcome family, total sample size and effect heterogeneity.

    ``sigma_tau`` only matters for the ``CFV_*`` families, where the unit
    effect is ``1 + sigma_tau * Y(0)``.  The ``*_NULL`` families add exactly
    one to every control outcome.
    """

    family: str
    n: int
    sigma_tau: float = 0.0
    balanced: bool = True

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown DGP family {self.family!r}")
        if self.n < 4:
            raise ConfigError("need at least four units")
        if self.sigma_tau < 0:
            raise ConfigError("sigma_tau must be non-negative")
        if self.balanced and self.n % 2:
            raise ConfigError("balanced designs need an even n")
        if self.family.endswith("_NULL") and self.sigma_tau != 0:
            raise ConfigError("null families have no effect variation")

    @property
    def key(self) -> str:
        if self.family.startswith("CFV"):
            return f"{self.family}[sigma_tau={self.sigma_tau:g}],n={self.n}"
        return f"{self.family},n={self.n}"

    @property
    def cell_id(self) -> int:
        """Stable id for seed derivation, independent of any table layout."""
        return zlib.crc32(self.key.encode())

    def to_dict(self) -> dict:
        return {"family": self.family, "n": self.n, "sigma_tau": self.sigma_tau,
                "balanced": self.balanced}


def _control_outcomes(family: str, u: np.ndarray) -> np.ndarray:
    if family in ("NORMAL_NULL", "CFV_NORMAL"):
        return special.ndtri(u)
    if family == "T5_NULL":
        return special.stdtrit(5, u)
    if family == "EXPO_NULL":
        return -np.log1p(-u)
    return np.exp(special.ndtri(u))


def simulate_science(spec: DgpSpec, seed: int) -> ScienceTable:
    """Both potential outcomes for every unit, by inverse CDF on a counter stream."""
    u = uniforms(derive_seed(seed, _OUTCOME_STREAM), spec.n)
    y0 = _control_outcomes(spec.family, u)
    if spec.family.endswith("_NULL"):
        y1 = y0 + 1.0
        gap = (y1 - y0) - 1.0
        assert np.all(np.abs(gap) <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(y0)))
    else:
        # grouped so sigma_tau = 0 gives the same bits as the null families
        y1 = (y0 + 1.0) + spec.sigma_tau * y0
    return ScienceTable(y0, y1)


def simulate_dgp(spec: DgpSpec, seed: int) -> Dataset:
    """Draw a science table and observe it under complete randomization.

    Balanced specs treat exactly ``n / 2`` units.
    """
    table = simulate_science(spec, seed)
    key = derive_seed(seed, _ASSIGN_STREAM)
    if spec.balanced:
        z = draw_assignments(CompletelyRandomized(spec.n, spec.n // 2), key, 1)[0]
    else:
        # independent fair coins; the analysis conditions on the realized count
        z = (uniforms(key, spec.n) < 0.5).astype(np.int8)
    y = np.where(z == 1, table.y1, table.y0)
    return validate_dataset(y, z)


@dataclass(frozen=True)
class SimConfig:
    """Per-replicate method settings."""

    R: int = 499
    gamma: float = DEFAULT_GAMMA
    grid_points: int = 41
    bootstrap_B: int = 1000
    subsample_S: int = 500

    def to_dict(self) -> dict:
        return {"R": self.R, "gamma": self.gamma, "grid_points": self.grid_points,
                "bootstrap_B": self.bootstrap_B, "subsample_S": self.subsample_S}


@dataclass(frozen=True)
class SimReport:
    spec: DgpSpec
    method: str
    alpha: float
    reps: int
    rejections: int
    seed: int
    runtime: float = field(default=0.0, compare=False)

    @property
    def rejection_rate(self) -> float:
        return self.rejections / self.reps

    @property
    def mc_se(self) -> float:
        r = self.rejection_rate
        return float(np.sqrt(r * (1 - r) / self.reps))

    def to_dict(self, timing: bool = False) -> dict:
        d = {**self.spec.to_dict(), "method": self.method, "alpha": self.alpha,
             "reps": self.reps, "rejections": self.rejections,
             "rejection_rate": self.rejection_rate, "mc_se": self.mc_se, "seed": self.seed}
        if timing:
            d["runtime"] = self.runtime
        return d


def replicate_pvalues(spec: DgpSpec, methods: Sequence[str], rep_seed: int,
                      config: SimConfig = SimConfig()) -> dict:
    """p-values of each method on one simulated dataset."""
    ds = simulate_dgp(spec, rep_seed)
    out = {}
    if "FRT_PI" in methods or "FRT_CI" in methods:
        curve = frt_ci(ds, StatisticSpec.sks(), R=config.R,
                       seed=derive_seed(rep_seed, _METHOD_STREAM["FRT_CI"]),
                       gamma=config.gamma, grid_spec=GridSpec(points=config.grid_points))
        # common random numbers: the plug-in test is the curve at its center
        out["FRT_PI"] = curve.plug_in_p
        out["FRT_CI"] = curve.p_gamma
    y1, y0 = ds.y1, ds.y0
    if "SUBSAMPLING" in methods:
        out["SUBSAMPLING"] = baselines.subsampling_pvalue(
            y1, y0, S=config.subsample_S, seed=derive_seed(rep_seed, _METHOD_STREAM["SUBSAMPLING"])
        ).p_value
    if "BOOTSTRAP" in methods:
        out["BOOTSTRAP"] = baselines.bootstrap_pvalue(
            y1, y0, B=config.bootstrap_B, seed=derive_seed(rep_seed, _METHOD_STREAM["BOOTSTRAP"])
        ).p_value
    if "NAIVE_PLUGIN" in methods:
        out["NAIVE_PLUGIN"] = baselines.naive_plugin_pvalue(y1, y0).p_value
    if "KVAR" in methods:
        out["KVAR"] = baselines.kvar_asymptotic_pvalue(y1, y0).p_value
    return {m: out[m] for m in methods}


def _check_methods(methods):
    methods = tuple(methods)
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown methods {bad}")
    if not methods:
        raise EmptyGrid("no methods requested")
    return methods


def run_cell(spec: DgpSpec, methods: Sequence[str], reps: int, alpha: float = 0.05,
             seed: int = 0, config: SimConfig = SimConfig(), threads: int = 1) -> list[SimReport]:
    """Replicate one DGP cell; every method sees the same simulated datasets."""
    methods = _check_methods(methods)
    if reps < 1:
        raise EmptyGrid("reps must be at least 1")
    if not 0 < alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    seed = as_seed(seed)
    rep_seeds = [derive_seed(seed, spec.cell_id, r) for r in range(reps)]
    t0 = time.perf_counter()
    run = lambda s: replicate_pvalues(spec, methods, s, config)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(run, rep_seeds))
    else:
        results = [run(s) for s in rep_seeds]
    elapsed = time.perf_counter() - t0
    reports = []
    for m in methods:
        rej = sum(1 for r in results if r[m] <= alpha)
        reports.append(SimReport(spec, m, alpha, reps, rej, seed, elapsed))
    return reports


def run_size_table(methods: Sequence[str], families: Sequence[str], ns: Sequence[int],
                   reps: int = 1000, alpha: float = 0.05, seed: int = 0,
                   config: SimConfig = SimConfig(), threads: int = 1) -> list[SimReport]:
    """Rejection rates under the constant-effect null, one report per (family, n, method)."""
    if reps < 1:
        raise EmptyGrid("reps must be at least 1")
    for f in families:
        if not f.endswith("_NULL"):
            raise ConfigError(f"size tables need a null family, got {f!r}")
    out = []
    for f in families:
        for n in ns:
            out.extend(run_cell(DgpSpec(f, int(n)), methods, reps, alpha, seed, config, threads))
    return out


def run_power_table(methods: Sequence[str], families: Sequence[str], sigmas: Sequence[float],
                    ns: Sequence[int], reps: int = 500, alpha: float = 0.05, seed: int = 0,
                    config: SimConfig = SimConfig(), threads: int = 1) -> list[SimReport]:
    """Rejection rates of the constant-effect null under dilated alternatives."""
    if reps < 1:
        raise EmptyGrid("reps must be at least 1")
    out = []
    for f in families:
        if not f.startswith("CFV"):
            raise ConfigError(f"power tables need a CFV family, got {f!r}")
        for n in ns:
            for s in sigmas:
                out.extend(run_cell(DgpSpec(f, int(n), float(s)), methods, reps, alpha, seed,
                                    config, threads))
    return out


REPORT_FIELDS = ("family", "n", "sigma_tau", "balanced", "method", "alpha", "reps",
                 "rejections", "rejection_rate", "mc_se", "seed")


def reports_to_csv(reports: Sequence[SimReport], timing: bool = False) -> str:
    fields = REPORT_FIELDS + (("runtime",) if timing else ())
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(r.to_dict(timing=timing))
    return buf.getvalue()


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def manifest(config: dict, reports: Sequence[SimReport], timing: bool = False) -> dict:
    return {"config": config, "config_hash": config_hash(config),
            "cells": [r.to_dict(timing=timing) for r in reports]}


# ---------------------------------------------------------------- curves


@dataclass(frozen=True)
class CurveSpec:
    """Setups for single-dataset p-value curves.

    ``kind="shift"``: exponential baseline, constant effect ``tau`` and the
    SKS curve over the Neyman interval.  ``kind="subgroups"``: exponential
    baseline in groups of ``group_sizes`` with within-group effects
    ``group_taus``, tested with WSKS over the stratum-effects ellipse
    conditional on the realized treated counts.
    """

    kind: str = "shift"
    n: int = 200
    tau: float = 2.0
    group_sizes: tuple = (75, 375)
    group_taus: tuple = (3.0, 1.0)
    R: int = 999
    gamma: float = DEFAULT_GAMMA
    grid_points: int = 41
    per_axis: int = 11

    def __post_init__(self):
        if self.kind not in ("shift", "subgroups"):
            raise ConfigError(f"unknown curve kind {self.kind!r}")
        if self.kind == "subgroups" and len(self.group_sizes) != len(self.group_taus):
            raise ConfigError("group_sizes and group_taus differ in length")


@dataclass(frozen=True, eq=False)
class CurveOutcome:
    curve: PValueCurve
    dataset: Dataset
    omnibus: Optional[PValueCurve] = None


def _subgroup_dataset(spec: CurveSpec, seed: int) -> Dataset:
    sizes = np.asarray(spec.group_sizes, dtype=int)
    n = int(sizes.sum())
    labels = np.repeat(np.arange(1, sizes.size + 1), sizes)
    y0 = -np.log1p(-uniforms(derive_seed(seed, _OUTCOME_STREAM), n))
    y1 = y0 + np.asarray(spec.group_taus, dtype=float)[labels - 1]
    z = draw_assignments(CompletelyRandomized(n, n // 2), derive_seed(seed, _ASSIGN_STREAM), 1)[0]
    return validate_dataset(np.where(z == 1, y1, y0), z, stratum=labels)


def curve_experiment(spec: CurveSpec, seed: int, threads: int = 1) -> CurveOutcome:
    """One simulated dataset and its p-value curve, with the true value as oracle."""
    seed = as_seed(seed)
    frt_seed = derive_seed(seed, _METHOD_STREAM["FRT_CI"])
    if spec.kind == "shift":
        y0 = -np.log1p(-uniforms(derive_seed(seed, _OUTCOME_STREAM), spec.n))
        table = ScienceTable(y0, y0 + spec.tau)
        z = draw_assignments(CompletelyRandomized(spec.n, spec.n // 2),
                             derive_seed(seed, _ASSIGN_STREAM), 1)[0]
        ds = validate_dataset(np.where(z == 1, table.y1, table.y0), z)
        curve = frt_ci(ds, StatisticSpec.sks(), R=spec.R, seed=frt_seed, gamma=spec.gamma,
                       grid_spec=GridSpec(points=spec.grid_points), oracle_value=[spec.tau],
                       threads=threads)
        return CurveOutcome(curve, ds)
    ds = _subgroup_dataset(spec, seed)
    design = Stratified(tuple(ds.stratum_counts()), labels=ds.stratum)
    region = nuisance_region(ds, "stratum", spec.gamma)
    curve = frt_ci(ds, StatisticSpec.wsks(), design=design, R=spec.R, seed=frt_seed,
                   gamma=spec.gamma, grid_spec=GridSpec(per_axis=spec.per_axis),
                   null_family="stratum", region=region, oracle_value=list(spec.group_taus),
                   threads=threads)
    omni = frt_ci(ds, StatisticSpec.sks(), R=spec.R, seed=derive_seed(seed, 99),
                  gamma=spec.gamma, grid_spec=GridSpec(points=spec.grid_points), threads=threads)
    return CurveOutcome(curve, ds, omni)
