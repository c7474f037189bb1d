"""Least squares via Householder QR, and t / F tail probabilities.

The tail probabilities are built on the regularized incomplete beta
function, evaluated with a modified Lentz continued fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, RankError

RANK_TOL = 1e-10


@dataclass(frozen=True)
class DesignMatrix:
    values: np.ndarray
    labels: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("design matrix must be two dimensional")
        labels = tuple(self.labels)
        if len(labels) != v.shape[1]:
            raise ValueError(f"{len(labels)} labels for {v.shape[1]} columns")
        if len(set(labels)) != len(labels):
            raise ValueError("design matrix labels must be unique")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "labels", labels)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def columns(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LeastSquaresSolution:
    labels: tuple
    coefficients: np.ndarray
    residuals: np.ndarray
    residual_df: int
    sigma2: float
    covariance_scale: np.ndarray
    unscaled_covariance: np.ndarray

    def coef(self, label) -> float:
        return float(self.coefficients[self.labels.index(label)])

    def standard_errors(self) -> np.ndarray:
        return np.sqrt(self.sigma2 * self.covariance_scale)

    @property
    def sse(self) -> float:
        return float(self.residuals @ self.residuals)


def solve_least_squares(X, y, labels=None) -> LeastSquaresSolution:
    """Minimize ``||y - X b||^2`` with Householder QR.

    Columns are scaled to unit norm before factoring, so the rank test and
    the conditioning do not depend on the units of each column. A column
    whose diagonal entry in ``R`` falls below ``1e-10`` times the largest
    one is reported as dependent on the columns before it.

    Parameters
    ----------
    X : DesignMatrix or array_like, shape (n, p)
    y : array_like, shape (n,)
    labels : sequence of str, optional
        Column labels when ``X`` is a plain array.

    Returns
    -------
    LeastSquaresSolution
    """
    if not isinstance(X, DesignMatrix):
        A = np.asarray(X, dtype=float)
        X = DesignMatrix(A, labels if labels is not None else [f"x{j}" for j in range(A.shape[1])])
    A = X.values
    y = np.asarray(y, dtype=float).ravel()
    n, p = A.shape
    if y.size != n:
        raise ValueError(f"{n} design rows but {y.size} responses")
    if n < p:
        raise RankError(f"{n} rows cannot determine {p} coefficients")

    norms = np.linalg.norm(A, axis=0)
    for j, nrm in enumerate(norms):
        if nrm == 0:
            raise RankError(f"column {X.labels[j]!r} is identically zero", X.labels[j])
    Q, R = np.linalg.qr(A / norms, mode="reduced")
    diag = np.abs(np.diag(R))
    for j in range(p):
        if diag[j] < RANK_TOL * diag.max():
            raise RankError(
                f"column {X.labels[j]!r} is linearly dependent on earlier columns", X.labels[j]
            )

    scaled = np.linalg.solve(R, Q.T @ y) if p else np.empty(0)
    coef = scaled / norms
    resid = y - A @ coef
    df = n - p
    sigma2 = float(resid @ resid / df) if df > 0 else float("nan")
    Rinv = np.linalg.solve(R, np.eye(p)) if p else np.empty((0, 0))
    cov = (Rinv @ Rinv.T) / np.outer(norms, norms)
    return LeastSquaresSolution(X.labels, coef, resid, df, sigma2, np.diag(cov).copy(), cov)


def _betacf(a, b, x, max_iter=20000, eps=1e-16):
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


_STIRLING_MIN = 15.0


def _stirling_tail(z):
    # lgamma(z) - [(z - 1/2) log z - z + log(2 pi)/2], valid for z >= 15
    z2 = z * z
    return (1.0 / 12.0 - (1.0 / 360.0 - (1.0 / 1260.0 - (1.0 / 1680.0 - 1.0 / (1188.0 * z2)) / z2) / z2) / z2) / z


def _log1pmx(u):
    """``log(1 + u) - u`` without cancellation; callers keep ``|u| <= 0.01``."""
    total, term = 0.0, u
    for k in range(2, 12):
        term *= -u
        total += term / k
    return total


def _log_front(a, b, x):
    """``log(x^a (1-x)^b / B(a, b))``."""
    if max(a, b) < _STIRLING_MIN:
        return (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    if min(a, b) >= _STIRLING_MIN:
        s = a + b
        x0, y0 = a / s, b / s
        u, v = (x - x0) / x0, (x0 - x) / y0
        # the series only matters near the mode; elsewhere logs are exact enough
        ta = a * _log1pmx(u) if abs(u) <= 0.01 else a * (math.log(x) - math.log(x0) - u)
        tb = b * _log1pmx(v) if abs(v) <= 0.01 else b * (math.log1p(-x) - math.log(y0) - v)
        core = ta + tb
        return (core + 0.5 * math.log(a * b / (2.0 * math.pi * s))
                - _stirling_tail(a) - _stirling_tail(b) + _stirling_tail(s))
    # one large, one small shape: difference lgamma(big + small) - lgamma(big)
    big, small = (a, b) if a > b else (b, a)
    s = big + small
    diff = ((big - 0.5) * math.log1p(small / big) + small * math.log(s) - small
            + _stirling_tail(s) - _stirling_tail(big))
    return diff - math.lgamma(small) + a * math.log(x) + b * math.log1p(-x)


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """``I_x(a, b)``, the regularized incomplete beta function."""
    if not (a > 0 and b > 0):
        raise DomainError(f"incomplete beta needs a, b > 0 (got a={a}, b={b})")
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"incomplete beta needs x in [0, 1] (got {x})")
    if x == 0.0 or x == 1.0:
        return float(x)
    front = math.exp(_log_front(a, b, x))
    # continued fraction converges fast only below the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return min(1.0, front * _betacf(a, b, x) / a)
    return max(0.0, 1.0 - front * _betacf(b, a, 1.0 - x) / b)


def t_p_two_sided(t: float, df: float) -> float:
    """Two-sided p-value of Student's t with ``df`` degrees of freedom."""
    if not df > 0:
        raise DomainError(f"degrees of freedom must be positive (got {df})")
    t = float(t)
    if t == 0.0:
        return 1.0
    if math.isinf(t):
        return 0.0
    # df/(df+t^2) loses precision for huge |t|; use the complement form there
    t2 = t * t
    x = df / (df + t2)
    if x > 0.5:
        return 1.0 - regularized_incomplete_beta(0.5, df / 2.0, t2 / (df + t2))
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def f_p_upper(F: float, df1: float, df2: float) -> float:
    """Upper-tail probability ``P(F(df1, df2) > F)``."""
    if not (df1 > 0 and df2 > 0):
        raise DomainError(f"degrees of freedom must be positive (got {df1}, {df2})")
    if F < 0:
        raise DomainError(f"F statistic must be nonnegative (got {F})")
    if F == 0:
        return 1.0
    if math.isinf(F):
        return 0.0
    x = df2 / (df2 + df1 * F)
    if x > 0.5:
        return 1.0 - regularized_incomplete_beta(df1 / 2.0, df2 / 2.0, df1 * F / (df2 + df1 * F))
    return regularized_incomplete_beta(df2 / 2.0, df1 / 2.0, x)
