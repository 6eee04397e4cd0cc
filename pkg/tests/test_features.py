import numpy as np
import pytest
from hypothesis import given, strategies as st

from specal import features
from specal.errors import DegenerateError, ParameterError
from specal.spectra import WavelengthAxis


def pearson_oracle(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y))
    vx = sum((a - mx) ** 2 for a in x)
    vy = sum((b - my) ** 2 for b in y)
    return abs(cov) / (vx * vy) ** 0.5


def test_perfect_and_sign(rng):
    y = rng.standard_normal(20)
    X = np.column_stack([rng.standard_normal(20), y, -y])
    r = features.rank_by_correlation(X, y)
    assert r.scores[1] == pytest.approx(1.0, abs=1e-15) and r.scores[2] == pytest.approx(1.0, abs=1e-15)
    assert list(r.order[:2]) == [1, 2]


def test_hand_matrix_vs_oracle():
    X = np.array([[1, 2, 0, 5], [2, 1, 1, 3], [3, 4, 0, 8], [4, 3, 2, 1], [5, 7, 1, 2.0]])
    y = np.array([1.0, 3.0, 2.0, 5.0, 4.0])
    r = features.rank_by_correlation(X, y)
    for j in range(4):
        assert abs(r.scores[j] - pearson_oracle(X[:, j].tolist(), y.tolist())) < 1e-12


def test_errors_and_dead_columns(rng):
    X = np.column_stack([np.ones(6), rng.standard_normal(6)])
    r = features.rank_by_correlation(X, rng.standard_normal(6))
    assert r.scores[0] == 0 and r.zero_variance[0] and list(r.order) == [1, 0]
    with pytest.raises(DegenerateError):
        features.rank_by_correlation(X, np.ones(6))
    with pytest.raises(ParameterError):
        features.rank_by_correlation(X[:2], np.arange(2.0))


def test_threshold_counts():
    r = features.rank_by_correlation(np.random.default_rng(0).random((10, 331)), np.arange(10.0))
    assert features.select_threshold(r, 100).retained.size == 331
    assert features.select_threshold(r, 48).retained.size == 159
    r10 = features.rank_by_correlation(np.random.default_rng(0).random((10, 10)), np.arange(10.0))
    assert features.select_threshold(r10, 0.1).retained.size == 1
    for bad in (0, -5, 100.5):
        with pytest.raises(ParameterError):
            features.select_threshold(r10, bad)


def test_ties_break_by_index():
    y = np.arange(5.0)
    X = np.column_stack([y, y, y * 2])
    assert list(features.rank_by_correlation(X, y).order) == [0, 1, 2]


@given(st.integers(0, 2**31 - 1), st.floats(0.5, 100), st.floats(0.5, 100))
def test_monotone_threshold(seed, t1, t2):
    rng = np.random.default_rng(seed)
    r = features.rank_by_correlation(rng.random((12, 40)), rng.random(12))
    lo, hi = sorted((t1, t2))
    a = set(features.select_threshold(r, lo).retained)
    b = set(features.select_threshold(r, hi).retained)
    assert a <= b


@given(st.integers(0, 2**31 - 1), st.lists(st.floats(0.01, 100), min_size=8, max_size=8))
def test_scale_invariance(seed, scales):
    rng = np.random.default_rng(seed)
    X = rng.random((15, 8))
    y = rng.random(15)
    a = features.rank_by_correlation(X, y)
    b = features.rank_by_correlation(X * np.array(scales), y)
    # scaling can only perturb scores by rounding; compare orders where scores are separated
    np.testing.assert_allclose(a.scores, b.scores, rtol=1e-12, atol=1e-14)
    gaps = np.diff(np.sort(a.scores))
    if gaps.size == 0 or gaps.min() > 1e-10:
        assert np.array_equal(a.order, b.order)


def test_ranking_csv(tmp_path):
    y = np.arange(6.0)
    X = np.column_stack([np.sin(y), y, y**2])
    r = features.rank_by_correlation(X, y)
    features.save_ranking_csv(r, WavelengthAxis([900.0, 901.0, 902.0]), tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "wavelength_nm,abs_r,rank"
    assert lines[2].startswith("901,1") and lines[2].endswith(",1")
