"""CSV ingestion and curve (de)serialization."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .data import Dataset, validate_dataset
from .errors import ConfigError, ParseError
from .frt import PValueCurve
from .linmod import Ellipsoid, Interval, NuisanceRegion

_MISSING = {"", "na", "nan", "null", "none"}


@dataclass(frozen=True)
class ColumnMapping:
    """Which CSV columns play which role.

    ``w`` lists effect-modifier columns; an intercept column of ones is
    always prepended to them.
    """

    outcome: str
    treatment: str
    stratum: Optional[str] = None
    x: tuple = ()
    w: tuple = ()

    def columns(self) -> list[str]:
        cols = [self.outcome, self.treatment]
        if self.stratum:
            cols.append(self.stratum)
        return cols + list(self.x) + list(self.w)

    def to_dict(self) -> dict:
        return {"outcome": self.outcome, "treatment": self.treatment, "stratum": self.stratum,
                "x": list(self.x), "w": list(self.w)}


@dataclass(frozen=True, eq=False)
class LoadedData:
    dataset: Dataset
    stratum_labels: tuple = ()


def parse_float(text: str, row: int, col: str) -> float:
    s = text.strip()
    if s.lower() in _MISSING:
        raise ParseError("missing value", row=row, column=col)
    try:
        v = float(s)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", row=row, column=col) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value: {text!r}", row=row, column=col)
    return v


def _parse_treatment(text: str, row: int, col: str) -> int:
    v = parse_float(text, row, col)
    if v not in (0.0, 1.0):
        raise ParseError(f"treatment must be 0 or 1, got {text!r}", row=row, column=col)
    return int(v)


def read_table(source: Union[str, Path, io.TextIOBase]) -> tuple[list[str], list[list[str]]]:
    if isinstance(source, (str, Path)):
        with open(source, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    else:
        rows = list(csv.reader(source))
    if not rows:
        raise ParseError("empty file: header row required", row=1)
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(r)}", row=i)
    return header, body


def load_table(header: list[str], body: list[list[str]], mapping: ColumnMapping) -> LoadedData:
    missing = [c for c in mapping.columns() if c not in header]
    if missing:
        raise ConfigError(f"columns not in file: {missing}")
    idx = {c: header.index(c) for c in mapping.columns()}
    y, z, s, X, W = [], [], [], [], []
    labels: dict[str, int] = {}
    for i, r in enumerate(body, start=2):
        y.append(parse_float(r[idx[mapping.outcome]], i, mapping.outcome))
        z.append(_parse_treatment(r[idx[mapping.treatment]], i, mapping.treatment))
        if mapping.stratum:
            lab = r[idx[mapping.stratum]].strip()
            if lab.lower() in _MISSING:
                raise ParseError("missing stratum label", row=i, column=mapping.stratum)
            s.append(labels.setdefault(lab, len(labels) + 1))
        X.append([parse_float(r[idx[c]], i, c) for c in mapping.x])
        W.append([1.0] + [parse_float(r[idx[c]], i, c) for c in mapping.w])
    n = len(y)
    ds = validate_dataset(
        y, z,
        stratum=s if mapping.stratum else None,
        x_adjust=np.array(X, dtype=float).reshape(n, len(mapping.x)) if mapping.x else None,
        w_modifiers=np.array(W, dtype=float).reshape(n, 1 + len(mapping.w)) if mapping.w else None,
    )
    return LoadedData(ds, tuple(labels))


def load_csv(path, mapping: ColumnMapping) -> Dataset:
    """Read a headed CSV into a validated dataset.

    Stratum labels are arbitrary strings numbered ``1..K`` in order of
    first appearance.
    """
    header, body = read_table(path)
    return load_table(header, body, mapping).dataset


# ------------------------------------------------------------ curves

def region_from_dict(d: dict) -> NuisanceRegion:
    if d.get("type") == "interval":
        return Interval(float(d["lo"]), float(d["hi"]), float(d["gamma"]), float(d["center"]))
    if d.get("type") == "ellipsoid":
        return Ellipsoid(np.array(d["center"], dtype=float), np.array(d["shape"], dtype=float),
                         float(d["radius2"]), float(d["gamma"]))
    raise ConfigError(f"unknown region type {d.get('type')!r}")


def curve_meta(curve: PValueCurve) -> dict:
    meta = {
        "statistic": curve.statistic,
        "observed_stat": curve.observed_stat,
        "region": curve.region.to_dict(),
        "gamma": curve.gamma,
        "center_index": curve.center_index,
        "draws": curve.draws,
        "mode": curve.mode,
        "seed": curve.seed,
    }
    if curve.oracle is not None:
        meta["oracle"] = {"nuisance": [float(x) for x in curve.oracle[0]], "p": curve.oracle[1]}
    return meta


def curve_to_csv(curve: PValueCurve) -> str:
    """Plot-ready curve table.

    Each nuisance axis ``k`` contributes ``theta_k`` (the value) and
    ``offset_k`` (its distance from the region center); the last column is
    ``p``.  A leading ``# meta:`` comment carries everything else, so the
    table reimports losslessly.
    """
    center = curve.nuisance[curve.center_index]
    d = curve.nuisance.shape[1]
    buf = io.StringIO()
    buf.write("# meta: " + json.dumps(curve_meta(curve), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([c for k in range(d) for c in (f"theta_{k}", f"offset_{k}")] + ["p"])
    for v, p in zip(curve.nuisance, curve.p_values):
        w.writerow([repr(float(x)) for k in range(d) for x in (v[k], v[k] - center[k])]
                   + [repr(float(p))])
    return buf.getvalue()


def curve_from_csv(text: str) -> PValueCurve:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# meta: "):
        raise ParseError("curve CSV must start with a '# meta:' line", row=1)
    meta = json.loads(lines[0][len("# meta: "):])
    rows = list(csv.reader(lines[1:]))
    header, body = rows[0], rows[1:]
    d = (len(header) - 1) // 2
    nuis = np.array([[float(r[2 * k]) for k in range(d)] for r in body], dtype=float)
    pv = np.array([float(r[-1]) for r in body], dtype=float)
    oracle = None
    if "oracle" in meta:
        oracle = (np.array(meta["oracle"]["nuisance"], dtype=float), float(meta["oracle"]["p"]))
    return PValueCurve(nuis.reshape(len(body), d), pv, region_from_dict(meta["region"]),
                       float(meta["gamma"]), float(meta["observed_stat"]),
                       int(meta["center_index"]), int(meta["draws"]), meta["mode"],
                       int(meta["seed"]), meta["statistic"], oracle)


def curves_equal(a: PValueCurve, b: PValueCurve) -> bool:
    return (np.array_equal(a.nuisance, b.nuisance) and np.array_equal(a.p_values, b.p_values)
            and a.to_dict() == b.to_dict())


def write_text(path: Optional[str], text: str):
    if path is None or path == "-":
        import sys

        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def knot_table_csv(knots: Sequence[float], values: Sequence[float]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["y", "g"])
    for k, v in zip(knots, values):
        w.writerow([repr(float(k)), repr(float(v))])
    return buf.getvalue()
