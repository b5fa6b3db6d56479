"""Property-based checks of invariances the statistics and maps must satisfy."""

import io

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from frtvar.baselines import kolmogorov_cdf
from frtvar.csvio import ColumnMapping, load_table, read_table
from frtvar.data import CompletelyRandomized, ConstantEffect, Stratified, validate_dataset
from frtvar.frt import draw_assignments, frt_pvalue
from frtvar.reuter import MonotoneMap, max_gap_deviation, reuter_transform
from frtvar.stats import (
    StatisticSpec,
    kvar_statistic,
    quantile_process_stat,
    sks_statistic,
    variance_ratio,
)

# dyadic values keep every shift and power-of-two rescaling exact
dyadic = st.integers(-512, 512).map(lambda k: k / 64)
samples = st.lists(dyadic, min_size=1, max_size=25)
spread = st.lists(dyadic, min_size=4, max_size=25).filter(lambda v: len(set(v)) > 2)
offsets = st.integers(-20, 20).map(float)
scales = st.sampled_from([0.25, 0.5, 2.0, 4.0, 8.0])


class TestKsInvariance:
    @given(samples, samples, offsets)
    def test_location(self, a, b, c):
        a, b = np.array(a), np.array(b)
        assert sks_statistic(a + c, b + c) == sks_statistic(a, b)

    @given(samples, samples, offsets)
    def test_shift_of_treated(self, a, b, c):
        a, b = np.array(a), np.array(b)
        assert sks_statistic(a + c, b) == sks_statistic(a, b)

    @given(samples, samples, scales)
    def test_scale(self, a, b, s):
        a, b = np.array(a), np.array(b)
        assert sks_statistic(s * a, s * b) == sks_statistic(a, b)

    @given(samples, samples)
    def test_range(self, a, b):
        t = sks_statistic(a, b)
        assert 0 <= t <= 1
        # a KS distance is a difference of two ECDF levels
        k = t * len(a) * len(b)
        assert abs(k - round(k)) <= 1e-9

    @given(samples, samples)
    def test_symmetry(self, a, b):
        assert sks_statistic(a, b) == sks_statistic(b, a)

    @given(samples)
    def test_self_distance(self, a):
        assert sks_statistic(a, a) == 0


class TestMomentStatistics:
    @given(spread, spread, scales)
    def test_variance_ratio_scale(self, a, b, s):
        a, b = np.array(a), np.array(b)
        assert variance_ratio(s * a, s * b) == variance_ratio(a, b)
        assert variance_ratio(a, b) * variance_ratio(b, a) == pytest.approx(1, rel=1e-14)
        assert StatisticSpec.var_ratio().orient([variance_ratio(a, b)])[0] >= 1

    @given(spread, spread)
    def test_kvar_antisymmetric(self, a, b):
        try:
            t = kvar_statistic(a, b)
        except Exception:
            assume(False)
        assert kvar_statistic(b, a) == -t

    @given(st.lists(dyadic, min_size=2, max_size=20), st.lists(dyadic, min_size=2, max_size=20),
           offsets)
    def test_quantile_process_shift(self, a, b, c):
        a, b = np.array(a), np.array(b)
        got = quantile_process_stat(a + c, b)
        assert abs(got - quantile_process_stat(a, b)) <= 1e-12 * (1 + abs(c) + np.abs(a).max())

    @given(st.lists(dyadic, min_size=2, max_size=20), st.lists(dyadic, min_size=2, max_size=20))
    def test_quantile_process_nonnegative(self, a, b):
        assert quantile_process_stat(a, b) >= 0


@st.composite
def small_dataset(draw):
    n = draw(st.integers(4, 9))
    y = draw(st.lists(dyadic, min_size=n, max_size=n))
    n1 = draw(st.integers(1, n - 1))
    z = [1] * n1 + [0] * (n - n1)
    perm = draw(st.permutations(range(n)))
    return validate_dataset(y, [z[i] for i in perm])


class TestPvalues:
    @given(small_dataset(), offsets)
    def test_exhaustive_range(self, ds, tau):
        res = frt_pvalue(ds, ConstantEffect(tau), StatisticSpec.sks())
        # the observed assignment is in the support, so p >= 1/|Z|
        assert 1 / res.draws <= res.p_value <= 1

    @given(small_dataset(), st.integers(1, 200), st.integers(0, 2**32))
    def test_monte_carlo_range(self, ds, R, seed):
        res = frt_pvalue(ds, ConstantEffect(0.0), StatisticSpec.sks(), R=R, seed=seed,
                         mode="monte_carlo")
        assert 1 / (R + 1) <= res.p_value <= 1
        k = res.p_value * (R + 1)
        assert abs(k - round(k)) <= 1e-9

    @given(small_dataset(), offsets)
    def test_relabelling_units(self, ds, tau):
        perm = np.arange(ds.n)[::-1]
        a = frt_pvalue(ds, ConstantEffect(tau), StatisticSpec.sks()).p_value
        assert frt_pvalue(ds.permuted(perm), ConstantEffect(tau), StatisticSpec.sks()).p_value == a


class TestAssignments:
    @given(st.integers(2, 40), st.data(), st.integers(0, 2**40))
    def test_cr_counts(self, n, data, seed):
        n1 = data.draw(st.integers(1, n - 1))
        A = draw_assignments(CompletelyRandomized(n, n1), seed, 20)
        assert np.all(A.sum(axis=1) == n1)
        assert set(np.unique(A)) <= {0, 1}

    @given(st.lists(st.tuples(st.integers(2, 8), st.integers(1, 7)), min_size=1, max_size=4)
           .map(lambda ps: tuple((n, min(k, n - 1)) for n, k in ps)),
           st.integers(0, 2**40))
    def test_stratified_counts(self, pairs, seed):
        d = Stratified(pairs)
        A = draw_assignments(d, seed, 15)
        for k, (_, n1) in enumerate(pairs, start=1):
            assert np.all(A[:, d.labels == k].sum(axis=1) == n1)

    @given(st.integers(0, 2**40), st.integers(1, 8))
    def test_threads_do_not_matter(self, seed, threads):
        d = CompletelyRandomized(17, 6)
        np.testing.assert_array_equal(draw_assignments(d, seed, 64, threads=threads),
                                      draw_assignments(d, seed, 64))


class TestKolmogorov:
    @given(st.floats(0.05, 6.0), st.floats(0.05, 6.0))
    def test_monotone(self, x, y):
        lo, hi = sorted((x, y))
        assert kolmogorov_cdf(lo) <= kolmogorov_cdf(hi)
        assert 0 <= kolmogorov_cdf(lo) <= 1


@st.composite
def increasing(draw, min_size=2, max_size=20):
    start = draw(st.floats(-100, 100))
    steps = draw(st.lists(st.floats(1e-3, 10), min_size=min_size - 1, max_size=max_size - 1))
    return np.cumsum([start] + steps)


@st.composite
def dominant_pair(draw):
    b = draw(increasing(1, 25))
    gaps = draw(st.lists(st.floats(1e-3, 5), min_size=len(b), max_size=len(b)))
    a = b + np.array(gaps)
    assume(np.unique(np.concatenate([a, b])).size == 2 * len(b))
    assume(np.all(np.diff(np.sort(a)) > 0))
    return a, b


class TestMonotone:
    @given(increasing(), st.data())
    def test_map_is_increasing(self, knots, data):
        values = data.draw(increasing(len(knots), len(knots)))
        g = MonotoneMap(knots, values)
        xs = np.sort(np.r_[knots, knots[0] - 5, knots[-1] + 5, (knots[:-1] + knots[1:]) / 2])
        assert np.all(np.diff(g(xs)) > 0)
        assert np.all(np.abs(g(knots) - values) <= 1e-9 * (1 + np.abs(values)))

    @given(dominant_pair())
    def test_reuter_post_condition(self, pair):
        a, b = pair
        rng = np.random.default_rng(0)
        y1, y0 = rng.permutation(a), rng.permutation(b)
        g = reuter_transform(y1, y0)
        assert max_gap_deviation(g, y1, y0) <= 1e-9
        pool = np.sort(np.r_[y1, y0])
        assert np.all(np.diff(g(pool)) > 0)


class TestCsvRoundTrip:
    @given(small_dataset())
    def test_load_recovers_dataset(self, ds):
        text = "y,z\n" + "".join(f"{float(v)!r},{int(t)}\n" for v, t in zip(ds.y_obs, ds.z))
        header, body = read_table(io.StringIO(text))
        again = load_table(header, body, ColumnMapping("y", "z")).dataset
        np.testing.assert_array_equal(again.y_obs, ds.y_obs)
        np.testing.assert_array_equal(again.z, ds.z)
