"""Acceptance criteria 1-9 at their stated tolerances.

Each test records a single ``CRITERION k: PASS|FAIL`` line; the lines are
printed in the terminal summary (and directly when run as a script).
"""

import json
import math
import os
import time

import mpmath
import numpy as np

import conftest
import oracles
from frtvar.baselines import kolmogorov_cdf, kvar_asymptotic_pvalue
from frtvar.cli import main
from frtvar.data import ConstantEffect, Stratified, StratumEffects, validate_dataset
from frtvar.frt import frt_pvalue
from frtvar.linmod import residualize
from frtvar.reuter import check_dominance, max_gap_deviation, reuter_transform
from frtvar.sim import CurveSpec, DgpSpec, SimConfig, curve_experiment, run_cell, simulate_dgp
from frtvar.stats import StatisticSpec, rks_statistic, sks_statistic

THREADS = os.cpu_count() or 1
SEED = 20160815


def record(k, ok, detail):
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} | {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _se(p, reps):
    return math.sqrt(p * (1 - p) / reps)


# ---- 1 ----------------------------------------------------------------------


def _oracle_cases(count=50):
    rng = np.random.default_rng(SEED)
    cases = []
    for i in range(count):
        n = int(rng.integers(4, 11))
        # continuous draws or dyadic grids; see the exactness note in the ledger
        y = rng.normal(size=n) if i % 2 else np.round(rng.normal(size=n) * 16) / 16
        if i % 3 == 2 and n >= 6:
            n_a = int(rng.integers(3, n - 2))
            s = np.r_[np.ones(n_a, int), np.full(n - n_a, 2)]
            z = np.zeros(n, int)
            for k in (1, 2):
                idx = np.flatnonzero(s == k)
                z[rng.choice(idx, int(rng.integers(1, idx.size)), replace=False)] = 1
            taus = tuple(float(t) for t in np.round(rng.normal(size=2) * 4) / 4)
            ds = validate_dataset(y, z, stratum=s)
            eff = [taus[k - 1] for k in s]
            stat_fn = (lambda ss: (lambda yy, zz: oracles.wsks(yy, zz, ss)))(list(s))
            cases.append((ds, StratumEffects(taus), StatisticSpec.wsks(), eff, stat_fn, s))
        else:
            z = np.zeros(n, int)
            z[rng.choice(n, int(rng.integers(1, n)), replace=False)] = 1
            tau = float(np.round(rng.normal() * 4) / 4)
            ds = validate_dataset(y, z)
            cases.append((ds, ConstantEffect(tau), StatisticSpec.sks(), [tau] * n,
                          oracles.sks_stat, None))
    return cases


def test_criterion_1_exhaustive_oracle():
    cases = _oracle_cases()
    # compile the kernels before the clock starts
    frt_pvalue(cases[0][0], cases[0][1], cases[0][2], mode="monte_carlo", R=10)
    t0 = time.perf_counter()
    exact_bad, mc_bad, strat = 0, 0, 0
    R = 10**5
    for ds, null, stat, eff, fn, s in cases:
        strat += s is not None
        want = float(oracles.brute_force_pvalue(ds.y_obs, ds.z, eff, fn, strata=s))
        design = None if s is None else Stratified(tuple(ds.stratum_counts()), labels=ds.stratum)
        ex = frt_pvalue(ds, null, stat, design, mode="exhaustive").p_value
        exact_bad += ex != want
        mc = frt_pvalue(ds, null, stat, design, mode="monte_carlo", R=R, seed=SEED).p_value
        mc_bad += abs(mc - want) > 3 * _se(want, R)
    elapsed = time.perf_counter() - t0
    ok = exact_bad == 0 and mc_bad == 0 and elapsed < 10
    record(1, ok, f"{len(cases)} datasets ({strat} stratified): exhaustive mismatches "
                  f"{exact_bad}, MC R=1e5 outside 3 SE {mc_bad}, {elapsed:.1f}s (< 10s)")


# ---- 2 ----------------------------------------------------------------------


def test_criterion_2_rks_equals_sks():
    rng = np.random.default_rng(SEED + 2)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(4, 201))
        n1 = int(rng.integers(2, n - 1))
        z = np.zeros(n, int)
        z[rng.choice(n, n1, replace=False)] = 1
        y = rng.standard_t(3, size=n) * rng.uniform(0.1, 10) + z * rng.normal()
        ds = validate_dataset(y, z)
        e, _ = residualize(ds)
        worst = max(worst, abs(rks_statistic(ds, e) - sks_statistic(ds.y1, ds.y0)))
    record(2, worst <= 1e-12, f"100 datasets, max |t_RKS - t_SKS| = {worst:.2e} (<= 1e-12)")


# ---- 3 ----------------------------------------------------------------------


def test_criterion_3_size_table():
    reps, alpha = 1000, 0.05
    cfg = SimConfig(R=499, gamma=0.001, grid_points=41)
    bound = alpha + 3 * _se(alpha, reps)
    ci_targets = {"NORMAL_NULL": 1.9, "T5_NULL": 2.1, "EXPO_NULL": 4.1, "LOGNORMAL_NULL": 4.5}
    pi_floor = {"EXPO_NULL": (8.0, 11.3), "LOGNORMAL_NULL": (11.0, 15.1)}
    fails, parts = [], []
    for fam, target in ci_targets.items():
        rep = {r.method: r for r in run_cell(DgpSpec(fam, 100), ["FRT_CI", "FRT_PI"], reps,
                                             alpha, SEED, cfg, THREADS)}
        ci = 100 * rep["FRT_CI"].rejection_rate
        pi = 100 * rep["FRT_PI"].rejection_rate
        parts.append(f"{fam} CI {ci:.1f} PI {pi:.1f}")
        if ci > 100 * bound:
            fails.append(f"{fam} FRT-CI {ci:.1f} > {100 * bound:.2f}")
        # rates are multiples of 0.1pp; the epsilon only absorbs float noise
        if abs(ci - target) > 2.5 + 1e-9:
            fails.append(f"{fam} FRT-CI {ci:.1f} vs target {target} +/- 2.5")
        if fam in pi_floor:
            floor, pt = pi_floor[fam]
            parts[-1] += f" (PI floor {floor}, target {pt})"
            if pi < floor:
                fails.append(f"{fam} FRT-PI {pi:.1f} < {floor}")
    [naive] = run_cell(DgpSpec("LOGNORMAL_NULL", 1000), ["NAIVE_PLUGIN"], reps, alpha, SEED,
                       cfg, THREADS)
    nv = 100 * naive.rejection_rate
    parts.append(f"LOGNORMAL n=1000 naive {nv:.1f}")
    if nv < 30 or abs(nv - 44.7) > 4 + 1e-9:
        fails.append(f"naive {nv:.1f} vs >= 30 and 44.7 +/- 4")
    record(3, not fails, "; ".join(parts) + (" | " + "; ".join(fails) if fails else ""))


# ---- 4 ----------------------------------------------------------------------


def test_criterion_4_power_table():
    reps, alpha = 500, 0.05
    cfg = SimConfig(R=499, gamma=0.001, grid_points=41)
    cells = {}
    for fam, n, methods in [("CFV_NORMAL", 400, ["FRT_CI"]), ("CFV_LOGNORMAL", 800, ["FRT_CI"]),
                            ("CFV_LOGNORMAL", 400, ["FRT_CI", "SUBSAMPLING"])]:
        for r in run_cell(DgpSpec(fam, n, 0.5), methods, reps, alpha, SEED, cfg, THREADS):
            cells[(fam, n, r.method)] = 100 * r.rejection_rate
    norm = cells[("CFV_NORMAL", 400, "FRT_CI")]
    ln8 = cells[("CFV_LOGNORMAL", 800, "FRT_CI")]
    ln4 = cells[("CFV_LOGNORMAL", 400, "FRT_CI")]
    sub4 = cells[("CFV_LOGNORMAL", 400, "SUBSAMPLING")]
    fails = []
    if norm < 85 or abs(norm - 93.0) > 5 + 1e-9:
        fails.append("Normal N=400")
    if ln8 < 88 or abs(ln8 - 94.1) > 5 + 1e-9:
        fails.append("LogNormal N=800")
    if not ln4 > sub4:
        fails.append("ordering at LogNormal N=400")
    detail = (f"Normal N=400 FRT-CI {norm:.1f} (>= 85, 93.0 +/- 5); LogNormal N=800 FRT-CI "
              f"{ln8:.1f} (>= 88, 94.1 +/- 5); LogNormal N=400 FRT-CI {ln4:.1f} > subsampling "
              f"{sub4:.1f}")
    record(4, not fails, detail + (" | failed: " + ", ".join(fails) if fails else ""))


# ---- 5 ----------------------------------------------------------------------


def test_criterion_5_curves():
    dominated = interior = 0
    seeds = 100
    for s in range(seeds):
        c = curve_experiment(CurveSpec("shift", n=200, tau=2.0), seed=SEED + s,
                             threads=THREADS).curve
        dominated += c.plug_in_p <= c.sup_p
        interior += c.max_is_interior()
    omni_rej = wsks_rej = 0
    groups = 50
    for s in range(groups):
        out = curve_experiment(CurveSpec("subgroups"), seed=SEED + 1000 + s, threads=THREADS)
        omni_rej += out.omnibus.p_gamma <= 0.005
        wsks_rej += out.curve.p_gamma <= 0.005
    ok = (dominated >= 95 and interior > seeds / 2 and omni_rej > groups / 2
          and wsks_rej < groups / 2)
    record(5, ok, f"shift curves: plug-in <= sup in {dominated}/100 (>= 95), interior max in "
                  f"{interior}/100 (> 50); subgroups: omnibus rejects at .005 in {omni_rej}/{groups},"
                  f" WSKS FRT-CI in {wsks_rej}/{groups}")


# ---- 6 ----------------------------------------------------------------------


def test_criterion_6_kolmogorov():
    mpmath.mp.dps = 50

    def oracle(x):
        x = mpmath.mpf(x)
        s = mpmath.nsum(lambda k: (-1) ** (k - 1) * mpmath.exp(-2 * k**2 * x**2), [1, mpmath.inf])
        return float(1 - 2 * s)

    xs = np.round(np.arange(0.3, 3.0001, 0.2), 10).tolist() + [3.0]
    worst = max(abs(kolmogorov_cdf(x) - oracle(x)) for x in xs)
    k95 = kolmogorov_cdf(1.358)
    ok = worst <= 1e-6 and abs(k95 - 0.95) <= 0.002
    record(6, ok, f"max error {worst:.1e} on {len(xs)} points (<= 1e-6); "
                  f"K(1.358) = {k95:.5f} (0.95 +/- 0.002)")


# ---- 7 ----------------------------------------------------------------------


def test_criterion_7_kvar_asymptotics():
    sims, alpha = 2000, 0.05
    rates = {}
    for fam in ("NORMAL_NULL", "LOGNORMAL_NULL"):
        rej = 0
        for s in range(sims):
            ds = simulate_dgp(DgpSpec(fam, 2000), SEED + s)
            rej += kvar_asymptotic_pvalue(ds.y1, ds.y0).p_value <= alpha
        rates[fam] = rej / sims
    se = _se(alpha, sims)
    normal_ok = abs(rates["NORMAL_NULL"] - alpha) <= 0.015
    ln_dev = abs(rates["LOGNORMAL_NULL"] - alpha) > 3 * se
    record(7, normal_ok and ln_dev,
           f"Normal {100 * rates['NORMAL_NULL']:.2f}% (5 +/- 1.5); LogNormal "
           f"{100 * rates['LOGNORMAL_NULL']:.2f}% (deviates from 5 by > 3 SE = {300 * se:.2f}pp)")


# ---- 8 ----------------------------------------------------------------------


def test_criterion_8_reuter():
    rng = np.random.default_rng(SEED + 8)
    accepted, worst, monotone = 0, 0.0, True
    while accepted < 100:
        n = int(rng.integers(1, 60))
        kind = accepted % 4
        y0 = rng.uniform(0.1, 3, n) if kind == 0 else rng.normal(size=n)
        if kind == 0:
            y1 = np.exp(y0)
        elif kind == 1:
            y1 = y0 + rng.uniform(0.01, 2)
        elif kind == 2:
            y1 = rng.normal(size=n) * rng.uniform(0.5, 2) + rng.uniform(0, 4)
        else:
            y1 = np.sort(y0) + rng.exponential(size=n) * 0.3 + 1e-3
        pool = np.r_[y1, y0]
        if np.unique(pool).size != pool.size or not check_dominance(y1, y0):
            continue
        accepted += 1
        g = reuter_transform(y1, y0)
        worst = max(worst, max_gap_deviation(g, y1, y0))
        monotone &= bool(np.all(np.diff(g(np.sort(pool))) > 0))
    record(8, worst <= 1e-9 and monotone,
           f"100 accepted pairs, max gap deviation {worst:.1e} (<= 1e-9), strictly increasing "
           f"on every pooled sample: {monotone}")


# ---- 9 ----------------------------------------------------------------------


def _csv_file(path, n=120, seed=9):
    rng = np.random.default_rng(seed)
    z = np.zeros(n, int)
    z[rng.choice(n, n // 2, replace=False)] = 1
    w = rng.normal(size=n)
    s = rng.choice(["a", "b"], n)
    y = rng.lognormal(size=n) + z * (1 + 0.4 * w)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("y,z,w,s\n")
        for i in range(n):
            fh.write(f"{float(y[i])!r},{z[i]},{float(w[i])!r},{s[i]}\n")


def test_criterion_9_determinism(tmp_path):
    data = str(tmp_path / "d.csv")
    _csv_file(data)
    runs = {
        "test": ["test", "-i", data, "--R", "199", "--seed", "5"],
        "curve-linear": ["curve", "-i", data, "--stat", "RKS", "--interact-w", "--w", "w",
                         "--null", "linear", "--R", "99", "--per-axis", "7"],
        "stratified": ["test", "-i", data, "--stat", "WSKS", "--stratum", "s", "--stratified",
                       "--null", "stratum", "--R", "99", "--per-axis", "5"],
        "bootstrap": ["baseline", "-i", data, "--method", "BOOTSTRAP", "--replicates", "300"],
        "subsampling": ["baseline", "-i", data, "--method", "SUBSAMPLING"],
        "simulate": ["simulate", "--families", "EXPO_NULL,LOGNORMAL_NULL", "--ns", "40",
                     "--reps", "12", "--methods", "FRT_CI,FRT_PI,BOOTSTRAP,SUBSAMPLING",
                     "--R", "49", "--grid-points", "9", "--seed", "7"],
    }
    differing = []
    for name, argv in runs.items():
        blobs = []
        for t in (1, 4, 8):
            out = tmp_path / f"{name}-{t}.json"
            assert main(argv + ["--threads", str(t), "-o", str(out)]) == 0
            blobs.append(out.read_bytes())
        json.loads(blobs[0])
        if not (blobs[0] == blobs[1] == blobs[2]):
            differing.append(name)
    record(9, not differing, f"{len(runs)} configurations at 1/4/8 threads, byte-identical JSON: "
                             f"{len(runs) - len(differing)}/{len(runs)}"
                             + (f" (differ: {', '.join(differing)})" if differing else ""))


if __name__ == "__main__":
    import pathlib
    import tempfile

    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as d:
                        fn(pathlib.Path(d))
                else:
                    fn()
            except AssertionError:
                pass
