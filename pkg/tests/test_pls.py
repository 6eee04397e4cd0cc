import numpy as np
import pytest
from hypothesis import given, strategies as st

from specal.errors import ParameterError, RankExhaustedError, ShapeError
from specal.metrics import r_squared
from specal.pls import PlsModel, fit_pls, predict_pls


def exact_rank_data(rng, n=40, p=15, r=4):
    X = rng.standard_normal((n, r)) @ rng.standard_normal((r, p))
    beta = rng.standard_normal(p)
    return X, X @ beta


def test_exact_rank_recovery(rng):
    X, y = exact_rank_data(rng)
    m = fit_pls(X, y, 4)
    assert abs(r_squared(y, predict_pls(m, X)) - 1) < 1e-8
    np.testing.assert_allclose(predict_pls(m, X), y, atol=1e-8 * np.abs(y).max())


def test_univariate_equals_ols(rng):
    x = rng.standard_normal(30)
    y = 2.5 * x - 1 + rng.normal(0, 0.3, 30)
    m = fit_pls(x[:, None], y, 1)
    slope = np.sum((x - x.mean()) * (y - y.mean())) / np.sum((x - x.mean()) ** 2)
    intercept = y.mean() - slope * x.mean()
    xs = np.linspace(-3, 3, 7)
    np.testing.assert_allclose(predict_pls(m, xs[:, None]), intercept + slope * xs, atol=1e-10, rtol=0)


def test_score_orthogonality_and_reconstruction(rng):
    X = rng.standard_normal((60, 25))
    y = X[:, 0] - X[:, 3] ** 2 + rng.normal(0, 0.1, 60)
    m = fit_pls(X, y, 10)
    T = m.scores
    for i in range(10):
        for j in range(i):
            assert abs(T[:, i] @ T[:, j]) < 1e-8 * np.linalg.norm(T[:, i]) * np.linalg.norm(T[:, j])
    W, P, q = m.weights, m.loadings, m.q
    b = W @ np.linalg.inv(P.T @ W) @ q
    Z = rng.standard_normal((5, 25))
    np.testing.assert_allclose(predict_pls(m, Z), (Z - m.x_mean) @ b + m.y_mean, rtol=1e-12, atol=1e-12)
    assert predict_pls(m, m.x_mean[None, :])[0] == pytest.approx(m.y_mean, abs=1e-12)


def test_rss_non_increasing(rng):
    X = rng.standard_normal((50, 20))
    y = X @ rng.standard_normal(20) + rng.normal(0, 0.5, 50)
    rss = [np.sum((y - predict_pls(fit_pls(X, y, k), X)) ** 2) for k in range(1, 11)]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(rss, rss[1:]))


@given(st.integers(0, 2**31 - 1))
def test_row_order_invariance(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((25, 8))
    y = rng.standard_normal(25)
    perm = rng.permutation(25)
    a = fit_pls(X, y, 3).coef
    b = fit_pls(X[perm], y[perm], 3).coef
    np.testing.assert_allclose(a, b, atol=1e-12 * max(1, np.abs(a).max()), rtol=1e-9)


def test_errors(rng):
    X, y = exact_rank_data(rng, r=2)
    with pytest.raises(RankExhaustedError) as ei:
        fit_pls(X, y, 5)
    assert ei.value.n_components_ok == 2
    with pytest.raises(ParameterError):
        fit_pls(X, y, 0)
    with pytest.raises(ParameterError):
        fit_pls(X[:3], y[:3], 3)
    with pytest.raises(ShapeError):
        predict_pls(fit_pls(X, y, 2), X[:, :3])


def test_json_round_trip(tmp_path, rng):
    X = rng.standard_normal((20, 6))
    y = rng.standard_normal(20)
    m = fit_pls(X, y, 3)
    m.save(tmp_path / "m.json")
    back = PlsModel.load(tmp_path / "m.json")
    assert np.array_equal(predict_pls(back, X), predict_pls(m, X))
    assert back.model_bytes() == m.model_bytes()
