"""Command-line interface: ``test``, ``curve``, ``simulate``, ``transform``, ``baseline``."""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__, baselines, sim
from .csvio import (
    ColumnMapping, curve_to_csv, dump_json, knot_table_csv, load_csv, parse_float, read_table,
    write_text,
)
from .data import design_for
from .errors import EXIT_CODES, ConfigError, FrtError
from .frt import DEFAULT_GAMMA, DEFAULT_R, DEFAULT_SEED, GridSpec, frt_ci, frt_pi, frt_pvalue, null_for
from .linmod import point_estimate
from .reuter import reuter_transform
from .stats import KINDS, StatisticSpec

SUBCOMMANDS = ("test", "curve", "simulate", "transform", "baseline")
TEST_METHODS = ("FRT_CI", "FRT_PI", "FRT")
BASELINE_METHODS = ("NAIVE_PLUGIN", "BOOTSTRAP", "SUBSAMPLING", "KVAR")
NULL_FAMILIES = ("constant", "linear", "stratum")


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a run's output.

    ``threads`` and ``output`` are left out of :meth:`to_dict`, and hence out
    of the config hash: neither changes what is computed.
    """

    subcommand: str
    input: Optional[str] = None
    mapping: Optional[ColumnMapping] = None
    statistic: StatisticSpec = field(default_factory=StatisticSpec.sks)
    method: str = "FRT_CI"
    null_family: str = "constant"
    null_value: Optional[tuple] = None
    stratified: bool = False
    R: int = DEFAULT_R
    gamma: float = DEFAULT_GAMMA
    grid_points: int = 41
    per_axis: int = 11
    mode: str = "auto"
    seed: Optional[int] = DEFAULT_SEED
    output: Optional[str] = None
    format: str = "json"
    # simulate
    table: str = "size"
    families: tuple = ()
    ns: tuple = ()
    sigmas: tuple = (0.0,)
    methods: tuple = ()
    reps: int = 1000
    alpha: float = 0.05
    # baseline
    replicates: Optional[int] = None
    variant: str = "quantile"
    # transform
    y1_column: Optional[str] = None
    y0_column: Optional[str] = None
    timing: bool = False
    threads: int = field(default=1, compare=False)

    def __post_init__(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}")
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.R < 1:
            raise ConfigError("R must be at least 1")
        if self.format not in ("json", "csv"):
            raise ConfigError(f"unknown format {self.format!r}")
        if self.mode not in ("auto", "exhaustive", "monte_carlo"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.null_family not in NULL_FAMILIES:
            raise ConfigError(f"unknown null family {self.null_family!r}")
        if self.subcommand in ("test", "curve", "baseline") and (not self.input or not self.mapping):
            raise ConfigError(f"{self.subcommand} needs an input file and column mapping")
        if self.subcommand == "test" and self.method not in TEST_METHODS:
            raise ConfigError(f"unknown test method {self.method!r}")
        if self.subcommand == "test" and self.method == "FRT" and self.null_value is None:
            raise ConfigError("method FRT needs a null value")
        if self.subcommand == "baseline" and self.method not in BASELINE_METHODS:
            raise ConfigError(f"unknown baseline method {self.method!r}")
        if self.variant not in baselines.SUBSAMPLING_VARIANTS:
            raise ConfigError(f"unknown subsampling variant {self.variant!r}")
        if self.format == "csv" and (self.subcommand == "baseline"
                                     or (self.subcommand == "test" and self.method != "FRT_CI")):
            raise ConfigError("csv output is only available for curves, tables and transforms")
        if self.subcommand == "simulate" and self.seed is None:
            raise ConfigError("simulate requires an explicit --seed")
        if self.subcommand == "transform" and not (self.input and self.y1_column and self.y0_column):
            raise ConfigError("transform needs an input file and two column names")

    def to_dict(self) -> dict:
        d = {}
        for f in dataclasses.fields(self):
            if f.name in ("threads", "output"):
                continue
            v = getattr(self, f.name)
            if isinstance(v, (ColumnMapping, StatisticSpec)):
                v = v.to_dict()
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        if d.get("mapping") is not None:
            m = d["mapping"]
            d["mapping"] = ColumnMapping(m["outcome"], m["treatment"], m.get("stratum"),
                                         tuple(m.get("x", ())), tuple(m.get("w", ())))
        if d.get("statistic") is not None:
            s = d["statistic"]
            if isinstance(s, str):
                s = {"kind": s}
            d["statistic"] = StatisticSpec(**s)
        for k in ("families", "ns", "sigmas", "methods", "null_value"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)

    @property
    def hash(self) -> str:
        return config_hash(self)


def config_hash(config: RunConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _stamp(config: RunConfig, body: dict, t0: float) -> dict:
    report = {"subcommand": config.subcommand, "config_hash": config.hash, "seed": config.seed,
              "version": __version__, **body}
    if config.timing:
        report["wall_time"] = time.perf_counter() - t0
    return report


def _run_test(config: RunConfig) -> tuple[dict, Optional[str]]:
    ds = load_csv(config.input, config.mapping)
    design = design_for(ds, stratified=config.stratified)
    stat = config.statistic
    use_x = stat.use_x
    if config.subcommand == "curve" or config.method == "FRT_CI":
        curve = frt_ci(ds, stat, design=design, R=config.R, seed=config.seed, gamma=config.gamma,
                       grid_spec=GridSpec(config.grid_points, config.per_axis),
                       null_family=config.null_family, use_x=use_x, mode=config.mode,
                       threads=config.threads)
        body = {"method": "FRT_CI", "null_family": config.null_family, **curve.to_dict()}
        return body, curve_to_csv(curve)
    if config.method == "FRT_PI":
        res = frt_pi(ds, stat, design=design, R=config.R, seed=config.seed,
                     null_family=config.null_family, use_x=use_x, mode=config.mode,
                     threads=config.threads)
        value = point_estimate(ds, config.null_family, use_x=use_x)
    else:
        value = np.asarray(config.null_value, dtype=float)
        res = frt_pvalue(ds, null_for(config.null_family, value), stat, design=design, R=config.R,
                         seed=config.seed, mode=config.mode, threads=config.threads)
    body = {"method": config.method, "null_family": config.null_family,
            "null_value": [float(v) for v in np.ravel(value)], **res.to_dict()}
    return body, None


def _run_baseline(config: RunConfig) -> dict:
    ds = load_csv(config.input, config.mapping)
    y1, y0 = ds.y1, ds.y0
    m = config.method
    if m == "NAIVE_PLUGIN":
        res = baselines.naive_plugin_pvalue(y1, y0)
    elif m == "KVAR":
        res = baselines.kvar_asymptotic_pvalue(y1, y0)
    elif m == "BOOTSTRAP":
        res = baselines.bootstrap_pvalue(y1, y0, B=config.replicates or baselines.DEFAULT_B,
                                         seed=config.seed, threads=config.threads)
    else:
        res = baselines.subsampling_pvalue(y1, y0, S=config.replicates or baselines.DEFAULT_S,
                                           seed=config.seed, threads=config.threads,
                                           variant=config.variant)
    return res.to_dict()


def _run_simulate(config: RunConfig) -> tuple[dict, str]:
    sc = sim.SimConfig(R=config.R, gamma=config.gamma, grid_points=config.grid_points)
    if config.table == "size":
        reports = sim.run_size_table(config.methods, config.families, config.ns, config.reps,
                                     config.alpha, config.seed, sc, config.threads)
    elif config.table == "power":
        reports = sim.run_power_table(config.methods, config.families, config.sigmas, config.ns,
                                      config.reps, config.alpha, config.seed, sc, config.threads)
    else:
        raise ConfigError(f"unknown simulation table {config.table!r}")
    body = {"table": config.table, "cells": [r.to_dict(timing=config.timing) for r in reports]}
    return body, sim.reports_to_csv(reports, timing=config.timing)


def _run_transform(config: RunConfig) -> tuple[dict, str]:
    header, body = read_table(config.input)
    for c in (config.y1_column, config.y0_column):
        if c not in header:
            raise ConfigError(f"column {c!r} not in file")
    i1, i0 = header.index(config.y1_column), header.index(config.y0_column)
    y1 = [parse_float(r[i1], k, config.y1_column) for k, r in enumerate(body, start=2)]
    y0 = [parse_float(r[i0], k, config.y0_column) for k, r in enumerate(body, start=2)]
    g = reuter_transform(y1, y0)
    out = {"knots": g.knots.tolist(), "values": g.values.tolist(), "shift": 1.0}
    return out, knot_table_csv(g.knots, g.values)


def run(config: RunConfig) -> tuple[dict, Optional[str]]:
    """Execute a configuration; returns the JSON report and, if any, its CSV form."""
    t0 = time.perf_counter()
    csv_text = None
    if config.subcommand in ("test", "curve"):
        body, csv_text = _run_test(config)
    elif config.subcommand == "baseline":
        body = _run_baseline(config)
    elif config.subcommand == "simulate":
        body, csv_text = _run_simulate(config)
    else:
        body, csv_text = _run_transform(config)
    return _stamp(config, body, t0), csv_text


# ------------------------------------------------------------ argparse

def _csv_list(text, cast=str):
    return tuple(cast(t) for t in text.split(",") if t.strip()) if text else ()


def _add_data_args(p):
    p.add_argument("--input", "-i")
    p.add_argument("--outcome", default="y")
    p.add_argument("--treatment", default="z")
    p.add_argument("--stratum")
    p.add_argument("--x", default="", help="comma-separated adjustment covariates")
    p.add_argument("--w", default="", help="comma-separated effect modifiers (intercept added)")


def _add_common(p, seed_default):
    p.add_argument("--seed", type=int, default=seed_default)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--output", "-o")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--timing", action="store_true", help="record wall time in the report")
    p.add_argument("--config", help="JSON config file; overrides other flags")


def _add_frt_args(p):
    p.add_argument("--stat", default="SKS", help=f"one of {', '.join(KINDS)}")
    p.add_argument("--tau", type=float, default=0.0, help="shift for KS_AT_TAU")
    p.add_argument("--norm", default="sup")
    p.add_argument("--qp-grid", type=int)
    p.add_argument("--use-x", action="store_true")
    p.add_argument("--interact-w", action="store_true")
    p.add_argument("--null", dest="null_family", default="constant")
    p.add_argument("--null-value", default="")
    p.add_argument("--stratified", action="store_true",
                   help="randomization was stratified (or condition on stratum counts)")
    p.add_argument("--R", type=int, default=DEFAULT_R)
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    p.add_argument("--grid-points", type=int, default=41)
    p.add_argument("--per-axis", type=int, default=11)
    p.add_argument("--mode", default="auto", choices=("auto", "exhaustive", "monte_carlo"))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="frtvar", description="Randomization tests for effect variation")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="subcommand", required=True)

    for name in ("test", "curve"):
        p = sub.add_parser(name, help="FRT for a sharp or composite null" if name == "test"
                           else "p-value curve over the nuisance region")
        _add_data_args(p)
        _add_frt_args(p)
        _add_common(p, DEFAULT_SEED)
        if name == "test":
            p.add_argument("--method", default="FRT_CI", choices=TEST_METHODS)

    p = sub.add_parser("simulate", help="size or power replication tables")
    p.add_argument("--table", choices=("size", "power"), default="size")
    p.add_argument("--families", required=True)
    p.add_argument("--ns", required=True)
    p.add_argument("--sigmas", default="0")
    p.add_argument("--methods", default="FRT_CI,FRT_PI")
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--R", type=int, default=499)
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA)
    p.add_argument("--grid-points", type=int, default=41)
    _add_common(p, None)

    p = sub.add_parser("transform", help="monotone map making two samples a constant shift apart")
    p.add_argument("--input", "-i")
    p.add_argument("--y1", dest="y1_column", default="y1")
    p.add_argument("--y0", dest="y0_column", default="y0")
    _add_common(p, DEFAULT_SEED)

    p = sub.add_parser("baseline", help="non-randomization comparison tests")
    _add_data_args(p)
    p.add_argument("--method", default="SUBSAMPLING", choices=BASELINE_METHODS)
    p.add_argument("--replicates", type=int)
    p.add_argument("--variant", default="quantile", choices=baselines.SUBSAMPLING_VARIANTS,
                   help="subsampling statistic")
    _add_common(p, DEFAULT_SEED)
    return ap


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    if getattr(ns, "config", None):
        with open(ns.config, encoding="utf-8") as fh:
            d = json.load(fh)
        d.setdefault("subcommand", ns.subcommand)
        cfg = RunConfig.from_dict(d)
        return dataclasses.replace(cfg, threads=ns.threads)
    sc = ns.subcommand
    kw = dict(subcommand=sc, seed=ns.seed, output=ns.output, format=ns.format,
              timing=ns.timing, threads=ns.threads)
    if sc in ("test", "curve", "baseline"):
        kw["input"] = ns.input
        kw["mapping"] = ColumnMapping(ns.outcome, ns.treatment, ns.stratum,
                                      _csv_list(ns.x), _csv_list(ns.w))
    if sc in ("test", "curve"):
        kw.update(
            statistic=StatisticSpec(ns.stat.upper(), tau=ns.tau, norm=ns.norm,
                                    grid_size=ns.qp_grid, use_x=ns.use_x,
                                    interact_w=ns.interact_w),
            null_family=ns.null_family, stratified=ns.stratified, R=ns.R, gamma=ns.gamma,
            grid_points=ns.grid_points, per_axis=ns.per_axis, mode=ns.mode,
            method=getattr(ns, "method", "FRT_CI"),
            null_value=_csv_list(ns.null_value, float) or None,
        )
    elif sc == "simulate":
        kw.update(table=ns.table, families=_csv_list(ns.families), ns=_csv_list(ns.ns, int),
                  sigmas=_csv_list(ns.sigmas, float), methods=_csv_list(ns.methods),
                  reps=ns.reps, alpha=ns.alpha, R=ns.R, gamma=ns.gamma,
                  grid_points=ns.grid_points)
    elif sc == "transform":
        kw.update(input=ns.input, y1_column=ns.y1_column, y0_column=ns.y0_column)
    else:
        kw.update(method=ns.method, replicates=ns.replicates, variant=ns.variant)
    return RunConfig(**kw)


def _error_payload(err: FrtError) -> dict:
    d = {"error": err.code, "category": err.category, "message": str(err)}
    for k in ("row", "column"):
        if getattr(err, k, None) is not None:
            d[k] = getattr(err, k)
    return d


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        config = config_from_args(ns)
        report, csv_text = run(config)
    except FrtError as err:
        sys.stderr.write(json.dumps(_error_payload(err)) + "\n")
        return EXIT_CODES.get(err.category, 4)
    if config.format == "csv":
        write_text(config.output, csv_text)
    else:
        write_text(config.output, dump_json(report))
    return 0


if __name__ == "__main__":
    sys.exit(main())
