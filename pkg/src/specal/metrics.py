"""Regression metrics: centred R², MAE, RMSE (1/n) and the F-test vs a constant model.

The F statistic comes from regressing the actual values on the predictions
(``y = a + b*yhat``) and testing the slope; the p-value uses the regularized
incomplete beta function, ``P(F > f) = I_{d2/(d2+d1 f)}(d2/2, d1/2)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import betainc

from .errors import DegenerateError, ParameterError, ShapeError


def _pair(y, yhat, min_n: int = 1) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float).ravel()
    yhat = np.asarray(yhat, dtype=float).ravel()
    if y.shape != yhat.shape:
        raise ShapeError(f"length mismatch: {y.size} actual vs {yhat.size} predicted")
    if y.size < min_n:
        raise ParameterError(f"need at least {min_n} values, got {y.size}")
    return y, yhat


def r_squared(y, yhat) -> float:
    y, yhat = _pair(y, yhat, 2)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        raise DegenerateError("actual values are constant; R-squared is undefined")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss_tot


def mae(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def rmse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    r = y - yhat
    return float(np.sqrt(r @ r / r.size))


def f_sf(f: float, d1: float, d2: float) -> float:
    """Upper tail of the F(d1, d2) distribution."""
    if math.isnan(f):
        return math.nan
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return float(betainc(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f)))


def f_vs_constant(y, yhat) -> tuple[float, float]:
    """F statistic (df 1, n-2) and p-value of ``y ~ a + b*yhat`` against ``y ~ a``."""
    y, yhat = _pair(y, yhat, 3)
    n = y.size
    xc = yhat - yhat.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0 or syy == 0:
        raise DegenerateError("F-test needs non-constant actual and predicted values")
    ssr = float(xc @ yc) ** 2 / sxx
    sse = max(syy - ssr, 0.0)
    if sse <= 1e-15 * syy:
        return math.inf, 0.0
    f = ssr / (sse / (n - 2))
    return f, f_sf(f, 1.0, n - 2.0)


@dataclass(frozen=True)
class Metrics:
    r_squared: float
    mae: float
    rmse: float
    n: int
    f_statistic: float
    p_value: float

    def as_dict(self) -> dict:
        return asdict(self)


def compute_metrics(y, yhat) -> Metrics:
    """All metrics at once; degenerate cases yield NaN instead of raising."""
    y, yhat = _pair(y, yhat, 2)
    try:
        r2 = r_squared(y, yhat)
    except DegenerateError:
        r2 = math.nan
    try:
        f, p = f_vs_constant(y, yhat) if y.size >= 3 else (math.nan, math.nan)
    except DegenerateError:
        # an exact match of a non-constant target is a perfect fit
        f, p = (math.inf, 0.0) if np.array_equal(y, yhat) and np.ptp(y) > 0 else (math.nan, math.nan)
    return Metrics(r2, mae(y, yhat), rmse(y, yhat), int(y.size), f, p)
