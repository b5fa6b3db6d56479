import numpy as np
import pytest

from frtvar.data import validate_dataset
from frtvar.errors import ConfigError, DegenerateVariance, RankDeficient, Underdetermined
from frtvar.linmod import (
    Ellipsoid,
    beta_confidence_region,
    chi2_quantile,
    least_squares,
    neyman_interval,
    normal_quantile,
    point_estimate,
    regression_design,
    residualize,
    stratum_effects_region,
)


def _cr(n, rng, n1=None):
    z = np.zeros(n, int)
    z[rng.choice(n, n // 2 if n1 is None else n1, replace=False)] = 1
    return z


class TestLeastSquares:
    def test_intercept_only(self):
        fit = least_squares(np.ones((5, 1)), np.full(5, 2.0))
        assert fit.coefficients[0] == pytest.approx(2)
        np.testing.assert_allclose(fit.residuals, 0, atol=1e-14)

    def test_exact_treatment(self):
        z = np.array([1, 0, 1, 0, 0], float)
        fit = least_squares(np.c_[np.ones(5), z], z)
        np.testing.assert_allclose(fit.coefficients, [0, 1], atol=1e-14)
        np.testing.assert_allclose(fit.residuals, 0, atol=1e-14)

    def test_normal_equations_hand(self):
        t = np.array([0.0, 1.0, 2.0])
        fit = least_squares(np.c_[np.ones(3), t], [1.0, 2.0, 4.0])
        np.testing.assert_allclose(fit.coefficients, [5 / 6, 1.5], rtol=1e-13)

    def test_rank_deficient(self):
        X = np.c_[np.ones(4), np.ones(4)]
        with pytest.raises(RankDeficient):
            least_squares(X, np.arange(4.0))

    def test_underdetermined(self):
        with pytest.raises(Underdetermined):
            least_squares(np.eye(3), np.ones(3))

    def test_orthogonality_and_fit(self):
        rng = np.random.default_rng(0)
        X = np.c_[np.ones(50), rng.normal(size=(50, 3))]
        y = rng.normal(size=50) * 100
        fit = least_squares(X, y)
        np.testing.assert_allclose(fit.fitted + fit.residuals, y, atol=1e-10)
        scale = np.linalg.norm(X, axis=0) * np.linalg.norm(y)
        assert np.all(np.abs(X.T @ fit.residuals) <= 1e-8 * scale)

    def test_hc2_matches_formula(self):
        rng = np.random.default_rng(1)
        X = np.c_[np.ones(30), rng.normal(size=30)]
        y = X @ [1, 2] + rng.normal(size=30) * (1 + np.abs(X[:, 1]))
        fit = least_squares(X, y)
        H = X @ np.linalg.solve(X.T @ X, X.T)
        h = np.diag(H)
        bread = np.linalg.inv(X.T @ X)
        meat = X.T @ np.diag(fit.residuals**2 / (1 - h)) @ X
        np.testing.assert_allclose(fit.coef_covariance, bread @ meat @ bread, rtol=1e-10)

    def test_classical(self):
        rng = np.random.default_rng(2)
        X = np.c_[np.ones(20), rng.normal(size=20)]
        y = rng.normal(size=20)
        fit = least_squares(X, y, covariance="classical")
        s2 = fit.residuals @ fit.residuals / 18
        np.testing.assert_allclose(fit.coef_covariance, s2 * np.linalg.inv(X.T @ X), rtol=1e-10)

    def test_unknown_covariance(self):
        with pytest.raises(ConfigError):
            least_squares(np.c_[np.ones(4), np.arange(4)], np.arange(4.0), covariance="HC9")


class TestQuantiles:
    def test_normal(self):
        assert normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-12)

    def test_chi2(self):
        assert chi2_quantile(0.95, 2) == pytest.approx(-2 * np.log(0.05), rel=1e-12)


class TestNeyman:
    def test_hand(self):
        iv = neyman_interval([1, 3], [0, 2], 0.05)
        assert iv.center == 1
        assert iv.lo == pytest.approx(1 - 1.959964 * np.sqrt(2), abs=1e-5)
        # 1 + 1.959964 * 1.414214 = 3.77181, which rounds to 3.772
        assert iv.hi == pytest.approx(3.772, abs=5e-4)

    def test_degenerate(self):
        with pytest.raises(DegenerateVariance):
            neyman_interval([2, 2], [1, 1], 0.05)

    def test_gamma_limit(self):
        wide = neyman_interval([1, 3, 2], [0, 2, 5], 0.001)
        narrow = neyman_interval([1, 3, 2], [0, 2, 5], 0.999)
        assert narrow.hi - narrow.lo < 0.01 * (wide.hi - wide.lo)
        assert narrow.contains(narrow.center)

    def test_width_scales(self):
        rng = np.random.default_rng(3)
        widths = []
        for n in (100, 400, 1600):
            iv = neyman_interval(rng.normal(size=n), rng.normal(size=n), 0.05)
            widths.append(iv.hi - iv.lo)
        assert widths[0] > widths[1] > widths[2]
        assert widths[0] / widths[2] == pytest.approx(4, rel=0.2)


class TestRegions:
    def _ds(self, n=200, seed=0, beta=(1.0, 0.5)):
        rng = np.random.default_rng(seed)
        w = rng.normal(size=n)
        z = _cr(n, rng)
        y = rng.normal(size=n) + z * (beta[0] + beta[1] * w)
        return validate_dataset(y, z, w_modifiers=np.c_[np.ones(n), w],
                                x_adjust=rng.normal(size=(n, 1)))

    def test_intercept_only_collapses(self):
        rng = np.random.default_rng(4)
        n = 60
        z = _cr(n, rng)
        ds = validate_dataset(rng.normal(size=n) + z, z, w_modifiers=np.ones((n, 1)))
        reg = beta_confidence_region(ds, 0.05)
        iv = neyman_interval(ds.y1, ds.y0, 0.05)
        assert reg.dim == 1
        assert reg.center[0] == pytest.approx(iv.center, abs=1e-12)
        # HC2 on a saturated two-arm design is exactly the Neyman variance
        assert reg.half_widths()[0] == pytest.approx((iv.hi - iv.lo) / 2, rel=1e-9)

    def test_center_member(self):
        reg = beta_confidence_region(self._ds(), 0.001)
        assert reg.contains(reg.center)
        assert reg.distance2(reg.center)[0] == 0

    def test_point_estimate_matches_center(self):
        ds = self._ds()
        np.testing.assert_allclose(point_estimate(ds, "linear"),
                                   beta_confidence_region(ds, 0.1).center, rtol=1e-12)

    def test_coverage(self):
        gamma = 0.1
        hits = 0
        reps = 1000
        for r in range(reps):
            reg = beta_confidence_region(self._ds(n=300, seed=1000 + r), gamma)
            hits += reg.contains([1.0, 0.5])
        se = np.sqrt(gamma * (1 - gamma) / reps)
        assert abs(hits / reps - (1 - gamma)) <= 3 * se

    def test_needs_w(self):
        ds = validate_dataset([1, 2, 3, 4], [1, 0, 1, 0])
        with pytest.raises(ConfigError):
            beta_confidence_region(ds, 0.05)

    def test_stratum_region(self):
        rng = np.random.default_rng(5)
        s = np.repeat([1, 2], 40)
        z = np.tile(np.r_[np.ones(20, int), np.zeros(20, int)], 2)
        y = rng.normal(size=80) + z * np.where(s == 1, 1.0, 3.0)
        ds = validate_dataset(y, z, stratum=s)
        reg = stratum_effects_region(ds, 0.01)
        np.testing.assert_allclose(reg.center, point_estimate(ds, "stratum"), rtol=1e-12)
        assert isinstance(reg, Ellipsoid) and reg.dim == 2


class TestResidualize:
    def test_no_covariates_demeans_arms(self):
        rng = np.random.default_rng(6)
        z = _cr(20, rng)
        ds = validate_dataset(rng.normal(size=20), z)
        e, _ = residualize(ds)
        want = ds.y_obs - np.where(z == 1, ds.y1.mean(), ds.y0.mean())
        np.testing.assert_allclose(e, want, atol=1e-13)

    def test_perfect_fit(self):
        rng = np.random.default_rng(7)
        n = 30
        x = rng.normal(size=(n, 1))
        z = _cr(n, rng)
        ds = validate_dataset(2 + 3 * x[:, 0] - z, z, x_adjust=x)
        e, _ = residualize(ds, use_x=True)
        np.testing.assert_allclose(e, 0, atol=1e-12)

    def test_stratum_indicators_give_cell_demeaning(self):
        rng = np.random.default_rng(8)
        s = np.repeat([1, 2], 10)
        z = np.tile([1, 1, 1, 0, 0, 0, 0, 1, 0, 0], 2)
        y = rng.normal(size=20)
        ds = validate_dataset(y, z, stratum=s)
        X = regression_design(ds, strata=True)
        fit = least_squares(X, y)
        want = y.copy()
        for k in (1, 2):
            for t in (0, 1):
                m = (s == k) & (z == t)
                want[m] -= y[m].mean()
        np.testing.assert_allclose(fit.residuals, want, atol=1e-13)

    def test_stacked_design(self):
        ds = self._small()
        Z = np.array([[1, 0, 1, 0], [0, 1, 0, 1]])
        X = regression_design(ds, Z)
        assert X.shape == (2, 4, 2)
        np.testing.assert_array_equal(X[1, :, 1], Z[1])

    def _small(self):
        return validate_dataset([1.0, 2.0, 3.0, 5.0], [1, 0, 1, 0])
