import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from specal import metrics
from specal.errors import DegenerateError, ParameterError, ShapeError


def anova_oracle(y, yhat):
    """Regression ANOVA of y on yhat computed from the fitted line."""
    y = np.asarray(y, float)
    x = np.asarray(yhat, float)
    slope, intercept = np.polyfit(x, y, 1)
    fit = intercept + slope * x
    ssr = np.sum((fit - y.mean()) ** 2)
    sse = np.sum((y - fit) ** 2)
    f = ssr / (sse / (len(y) - 2))
    from scipy import stats
    return f, stats.f.sf(f, 1, len(y) - 2)


def test_r_squared_examples():
    y = np.array([0.0, 1.0, 2.0, 3.0])
    assert metrics.r_squared(y, y) == 1.0
    assert metrics.r_squared(y, np.full(4, y.mean())) == 0.0
    assert metrics.r_squared(y, [0, 1, 2, 4]) == pytest.approx(0.8, abs=1e-15)
    with pytest.raises(DegenerateError):
        metrics.r_squared([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


def test_mae_rmse_examples():
    y = np.zeros(2)
    assert metrics.mae(y, y) == 0 and metrics.rmse(y, y) == 0
    assert metrics.mae(y, [3, -3]) == 3 and metrics.rmse(y, [3, -3]) == 3
    assert metrics.mae(y, [0, 4]) == 2 and metrics.rmse(y, [0, 4]) == pytest.approx(math.sqrt(8))
    with pytest.raises(ParameterError):
        metrics.mae([], [])
    with pytest.raises(ShapeError):
        metrics.rmse([1.0], [1.0, 2.0])


@given(st.integers(0, 2**31 - 1), st.integers(1, 50))
def test_rmse_at_least_mae(seed, n):
    rng = np.random.default_rng(seed)
    y, yhat = rng.standard_normal(n) * 10, rng.standard_normal(n) * 10
    assert metrics.rmse(y, yhat) >= metrics.mae(y, yhat) * (1 - 1e-15) >= 0


@given(st.integers(0, 2**31 - 1), st.floats(0.01, 100), st.floats(-100, 100))
def test_r_squared_affine_invariance(seed, a, b):
    rng = np.random.default_rng(seed)
    y = rng.standard_normal(20)
    yhat = y + rng.normal(0, 0.5, 20)
    assert metrics.r_squared(a * y + b, a * yhat + b) == pytest.approx(metrics.r_squared(y, yhat), abs=1e-9)


def test_f_vs_anova_oracle(rng):
    y = np.array([1.0, 2.5, 2.9, 4.2, 5.1, 5.8, 7.4, 7.9, 9.2, 9.8])
    yhat = y + np.array([0.3, -0.2, 0.5, -0.4, 0.1, 0.6, -0.3, 0.2, -0.5, 0.1])
    f, p = metrics.f_vs_constant(y, yhat)
    fo, po = anova_oracle(y, yhat)
    assert abs(f - fo) < 1e-8 * fo and abs(p - po) < 1e-8


def test_f_significant_and_null(rng):
    y = np.linspace(0, 21, 66)
    f, p = metrics.f_vs_constant(y, y + rng.normal(0, 1, 66))
    assert p < 0.01
    # yhat orthogonal to y after centring: slope exactly zero
    y0 = np.array([1.0, -1.0, 1.0, -1.0])
    yh = np.array([1.0, 1.0, -1.0, -1.0])
    f0, p0 = metrics.f_vs_constant(y0, yh)
    assert f0 == pytest.approx(0.0, abs=1e-12) and p0 == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DegenerateError):
        metrics.f_vs_constant([1.0, 2.0, 3.0], [2.0, 2.0, 2.0])


def test_f_sf_matches_scipy():
    from scipy import stats
    for f, d1, d2 in [(0.5, 1, 3), (3.2, 1, 64), (120.0, 1, 130), (8.0, 2, 10)]:
        assert metrics.f_sf(f, d1, d2) == pytest.approx(stats.f.sf(f, d1, d2), rel=1e-10, abs=1e-300)


def test_compute_metrics_degenerate():
    m = metrics.compute_metrics([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert m.r_squared == 1 and m.mae == 0 and m.rmse == 0 and m.f_statistic == math.inf and m.p_value == 0
    m = metrics.compute_metrics([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])
    assert math.isnan(m.r_squared) and math.isnan(m.f_statistic)
    assert set(m.as_dict()) == {"r_squared", "mae", "rmse", "n", "f_statistic", "p_value"}
