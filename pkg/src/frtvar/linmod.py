"""Least squares, robust covariances and nuisance-parameter regions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import special, stats

from .data import Dataset
from .errors import ConfigError, DegenerateVariance, RankDeficient, Underdetermined


@dataclass(frozen=True, eq=False)
class FitResult:
    coefficients: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    coef_covariance: np.ndarray


@dataclass(frozen=True, eq=False)
class Interval:
    lo: float
    hi: float
    gamma: float
    center: float

    @property
    def dim(self) -> int:
        return 1

    def contains(self, value) -> bool:
        v = float(np.ravel(value)[0])
        return self.lo <= v <= self.hi

    def to_dict(self) -> dict:
        return {"type": "interval", "lo": self.lo, "hi": self.hi,
                "center": self.center, "gamma": self.gamma}


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """``{b : (b - center)' shape^{-1} (b - center) <= radius2}``."""

    center: np.ndarray
    shape: np.ndarray
    radius2: float
    gamma: float

    @property
    def dim(self) -> int:
        return int(self.center.size)

    def distance2(self, b) -> np.ndarray:
        d = np.atleast_2d(np.asarray(b, dtype=float)) - self.center
        sol = np.linalg.solve(self.shape, d.T).T
        return np.einsum("ij,ij->i", d, sol)

    def contains(self, b) -> bool:
        return bool(self.distance2(b)[0] <= self.radius2 * (1 + 1e-12))

    def half_widths(self) -> np.ndarray:
        """Half-lengths of the axis-aligned bounding box."""
        return np.sqrt(self.radius2 * np.diag(self.shape))

    def to_dict(self) -> dict:
        return {"type": "ellipsoid", "center": self.center.tolist(),
                "shape": self.shape.tolist(), "radius2": self.radius2,
                "gamma": self.gamma}


NuisanceRegion = Union[Interval, Ellipsoid]


def normal_quantile(p):
    return special.ndtri(p)


def chi2_quantile(p, df):
    return stats.chi2.ppf(p, df)


def _qr_checked(design: np.ndarray):
    n, q = design.shape
    if n <= q:
        raise Underdetermined(f"{n} observations for {q} coefficients")
    Q, R = np.linalg.qr(design)
    d = np.abs(np.diag(R))
    tol = max(n, q) * np.finfo(float).eps * max(d.max(), 1.0)
    if d.min() <= tol:
        raise RankDeficient("design matrix does not have full column rank")
    return Q, R


def least_squares(design, y, covariance: str = "HC2") -> FitResult:
    """Ordinary least squares via Householder QR.

    Parameters
    ----------
    design : (N, q) array
    y : (N,) array
    covariance : {"HC2", "classical"}
        Coefficient covariance estimator.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    Q, R = _qr_checked(X)
    qty = Q.T @ y
    coef = np.linalg.solve(R, qty)
    fitted = Q @ qty
    resid = y - fitted
    Rinv = np.linalg.solve(R, np.eye(R.shape[0]))
    if covariance == "HC2":
        h = np.einsum("ij,ij->i", Q, Q)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(h < 1 - 1e-10, resid / np.sqrt(1 - h), 0.0)
        B = Q * scale[:, None]
        cov = Rinv @ (B.T @ B) @ Rinv.T
    elif covariance == "classical":
        n, q = X.shape
        cov = (resid @ resid) / (n - q) * (Rinv @ Rinv.T)
    else:
        raise ConfigError(f"unknown covariance {covariance!r}")
    cov = (cov + cov.T) / 2
    return FitResult(coef, resid, fitted, cov)


def neyman_interval(y1, y0, gamma: float) -> Interval:
    """Wald interval for the average effect using the Neyman variance."""
    a = np.asarray(y1, dtype=float)
    b = np.asarray(y0, dtype=float)
    if not 0 < gamma < 1:
        raise ConfigError("gamma must lie in (0, 1)")
    if a.size < 2 or b.size < 2:
        raise DegenerateVariance("each arm needs at least two units")
    var = a.var(ddof=1) / a.size + b.var(ddof=1) / b.size
    if var == 0:
        raise DegenerateVariance("both arm variances are zero")
    tau = a.mean() - b.mean()
    half = normal_quantile(1 - gamma / 2) * np.sqrt(var)
    return Interval(float(tau - half), float(tau + half), float(gamma), float(tau))


def regression_design(
    dataset: Dataset,
    z: Optional[np.ndarray] = None,
    use_x: bool = False,
    interact_w: bool = False,
    strata: bool = False,
) -> np.ndarray:
    """Columns ``[base, base * z, X]``.

    ``base`` is the intercept, the effect modifiers ``W`` (``interact_w``) or
    the stratum indicators (``strata``).  The ``base * z`` block carries the
    effect-model coefficients.  ``z`` may be a stack of assignments, giving a
    stack of designs.
    """
    z = dataset.z if z is None else np.asarray(z)
    if strata:
        base = dataset.stratum_indicators()
    elif interact_w:
        if dataset.w_modifiers is None:
            raise ConfigError("interaction with W requested but w_modifiers missing")
        base = dataset.w_modifiers
    else:
        base = np.ones((dataset.n, 1))
    zz = z[..., :, None].astype(float)
    shape = zz.shape[:-2] + base.shape
    blocks = [np.broadcast_to(base, shape), base * zz]
    if use_x:
        if dataset.x_adjust is None:
            raise ConfigError("covariate adjustment requested but x_adjust missing")
        blocks.append(np.broadcast_to(dataset.x_adjust, zz.shape[:-2] + dataset.x_adjust.shape))
    return np.concatenate(blocks, axis=-1)


def residualize(dataset: Dataset, use_x: bool = False, interact_w: bool = False):
    """Residuals of the regression behind ``t_RKS`` and the fit itself."""
    X = regression_design(dataset, use_x=use_x, interact_w=interact_w)
    fit = least_squares(X, dataset.y_obs)
    return fit.residuals, fit


def batch_residuals(
    dataset: Dataset, Y: np.ndarray, Z: np.ndarray, use_x: bool = False,
    interact_w: bool = False, block: int = 64,
) -> np.ndarray:
    """Residuals for a stack of (outcome, assignment) rows.

    Draws whose design loses rank fall back to a minimum-norm fit, so the
    residual is still the projection onto the column span.
    """
    R = Y.shape[0]
    out = np.empty_like(Y, dtype=float)
    for s in range(0, R, block):
        Xs = regression_design(dataset, Z[s:s + block], use_x=use_x, interact_w=interact_w)
        ys = Y[s:s + block]
        Q, Rm = np.linalg.qr(Xs)
        d = np.abs(np.diagonal(Rm, axis1=-2, axis2=-1))
        qty = np.einsum("rni,rn->ri", Q, ys)
        out[s:s + block] = ys - np.einsum("rni,ri->rn", Q, qty)
        tol = max(Xs.shape[-2:]) * np.finfo(float).eps * np.maximum(d.max(axis=1), 1.0)
        for j in np.flatnonzero(d.min(axis=1) <= tol):
            coef, *_ = np.linalg.lstsq(Xs[j], ys[j], rcond=None)
            out[s + j] = ys[j] - Xs[j] @ coef
    return out


def _ellipsoid_from_fit(fit: FitResult, sl: slice, gamma: float) -> Ellipsoid:
    center = fit.coefficients[sl].copy()
    shape = fit.coef_covariance[sl, sl].copy()
    try:
        np.linalg.cholesky(shape)
    except np.linalg.LinAlgError:
        raise DegenerateVariance("effect covariance block is not positive definite")
    radius2 = float(chi2_quantile(1 - gamma, center.size))
    return Ellipsoid(center, shape, radius2, float(gamma))


def beta_confidence_region(
    dataset: Dataset, gamma: float, use_x: bool = False, covariance: str = "HC2"
) -> Ellipsoid:
    """Wald region for the coefficients of ``W`` in the effect model."""
    if not 0 < gamma < 1:
        raise ConfigError("gamma must lie in (0, 1)")
    if dataset.w_modifiers is None:
        raise ConfigError("beta region needs w_modifiers")
    X = regression_design(dataset, use_x=use_x, interact_w=True)
    fit = least_squares(X, dataset.y_obs, covariance=covariance)
    k1 = dataset.w_modifiers.shape[1]
    return _ellipsoid_from_fit(fit, slice(k1, 2 * k1), gamma)


def stratum_effects_region(dataset: Dataset, gamma: float, covariance: str = "HC2") -> Ellipsoid:
    """Wald region for per-stratum average effects."""
    if not 0 < gamma < 1:
        raise ConfigError("gamma must lie in (0, 1)")
    X = regression_design(dataset, strata=True)
    fit = least_squares(X, dataset.y_obs, covariance=covariance)
    K = dataset.n_strata
    return _ellipsoid_from_fit(fit, slice(K, 2 * K), gamma)


def point_estimate(dataset: Dataset, family: str, use_x: bool = False) -> np.ndarray:
    """Plug-in estimate of the nuisance parameter for a null family."""
    if family == "constant":
        return np.array([dataset.y1.mean() - dataset.y0.mean()])
    if family == "linear":
        X = regression_design(dataset, use_x=use_x, interact_w=True)
        k1 = dataset.w_modifiers.shape[1]
        return least_squares(X, dataset.y_obs).coefficients[k1:2 * k1]
    if family == "stratum":
        taus = []
        for k in range(1, dataset.n_strata + 1):
            m = dataset.stratum == k
            y, z = dataset.y_obs[m], dataset.z[m]
            taus.append(y[z == 1].mean() - y[z == 0].mean())
        return np.array(taus)
    raise ConfigError(f"unknown null family {family!r}")


def nuisance_region(
    dataset: Dataset, family: str, gamma: float, use_x: bool = False, covariance: str = "HC2"
) -> NuisanceRegion:
    if family == "constant":
        return neyman_interval(dataset.y1, dataset.y0, gamma)
    if family == "linear":
        return beta_confidence_region(dataset, gamma, use_x=use_x, covariance=covariance)
    if family == "stratum":
        return stratum_effects_region(dataset, gamma, covariance=covariance)
    raise ConfigError(f"unknown null family {family!r}")
