import numpy as np
import pytest
from hypothesis import given, strategies as st

from specal.errors import AlignmentError, EmptyDatasetError, FormatError, InfeasiblePlanError, ParseError
from specal.spectra import (
    SpectraSet, SplitPlan, WavelengthAxis, average_replicates, format_float, load_csv, make_folds, save_csv,
)

from conftest import make_set


def test_axis_rejects_non_increasing():
    with pytest.raises(FormatError):
        WavelengthAxis([740.0, 740.0, 741.0])
    with pytest.raises(FormatError):
        WavelengthAxis([])


def test_load_full_axis(tmp_path, rng):
    X = rng.uniform(0.2, 0.8, (660, 331))
    data = make_set(X)
    save_csv(data, tmp_path / "a.csv")
    back = load_csv(tmp_path / "a.csv")
    assert back.n_samples == 660 and back.n_wavelengths == 331
    assert back.axis.values[0] == 740 and back.axis.values[-1] == 1070


def test_header_only_is_empty(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("sample_id,target,740,741\n")
    with pytest.raises(EmptyDatasetError):
        load_csv(p)


def test_hand_written_round_trip(tmp_path):
    text = (
        "# target: storage days\n"
        "sample_id,target,740,741,742,743\n"
        "a,0,0.5,0.25,0.125,0.1\n"
        "b,3,0.61,0.62,0.63,0.64\n"
        "c,21,1e-05,0.333333333333333,0.7,0.9\n"
    )
    p = tmp_path / "h.csv"
    p.write_text(text)
    data = load_csv(p)
    assert data.samples[2, 1] == 0.333333333333333
    assert data.sample_ids == ("a", "b", "c")
    np.testing.assert_array_equal(data.targets, [0, 3, 21])
    q = tmp_path / "h2.csv"
    save_csv(data, q)
    assert q.read_text() == text


@pytest.mark.parametrize("row, msg", [("a,1,0.1,", "741"), ("a,1,0.1,nan", "741"), ("a,x,0.1,0.2", "target")])
def test_bad_cells_name_row_and_column(tmp_path, row, msg):
    p = tmp_path / "bad.csv"
    p.write_text(f"sample_id,target,740,741\n{row}\n")
    with pytest.raises(ParseError, match=msg):
        load_csv(p)


def test_non_increasing_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("sample_id,target,741,740\na,1,0.1,0.2\n")
    with pytest.raises(FormatError):
        load_csv(p)


@given(st.lists(st.floats(-1e300, 1e300, allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
def test_format_float_round_trips(vals):
    for v in vals:
        assert float(format_float(v)) == v


def test_average_replicates_examples(rng):
    a = make_set([[2.0, 4.0]])
    b = make_set([[4.0, 8.0]])
    np.testing.assert_array_equal(average_replicates(a, b).samples, [[3.0, 6.0]])
    assert np.array_equal(average_replicates(a, a).samples, a.samples)
    A, B = rng.random((5, 7)), rng.random((5, 7))
    out = average_replicates(make_set(A), make_set(B)).samples
    assert np.array_equal(out, (A + B) / 2)
    assert np.array_equal(out, average_replicates(make_set(B), make_set(A)).samples)


def test_average_replicates_alignment():
    a = make_set([[1.0, 2.0]])
    with pytest.raises(AlignmentError):
        average_replicates(a, make_set([[1.0, 2.0]], start=750.0))
    with pytest.raises(AlignmentError):
        average_replicates(a, make_set([[1.0, 2.0]], y=[5.0]))


def test_660_sample_split_sizes():
    folds = make_folds(660, SplitPlan(10, 50, 2 / 9, 0))
    assert len(folds) == 500
    assert all((f.train_idx.size, f.validation_idx.size, f.test_idx.size) == (462, 132, 66) for f in folds)


def test_one_sample_per_fold():
    folds = make_folds(10, SplitPlan(10, 1, 2 / 9, 0))
    assert all(f.test_idx.size == 1 for f in folds)


def test_infeasible_plan():
    with pytest.raises(InfeasiblePlanError):
        make_folds(5, SplitPlan(10, 1))


def test_determinism_and_seed_sensitivity():
    a = make_folds(60, SplitPlan(10, 2, 2 / 9, 4))
    assert a == make_folds(60, SplitPlan(10, 2, 2 / 9, 4))
    tests = {tuple(make_folds(60, SplitPlan(10, 1, 2 / 9, s))[0].test_idx) for s in range(6)}
    assert len(tests) == 6


@given(st.integers(10, 120), st.integers(2, 10), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_partition_invariants(n, k, reps, seed):
    if n - (n + k - 1) // k < 2:
        return
    folds = make_folds(n, SplitPlan(k, reps, 2 / 9, seed))
    assert len(folds) == k * reps
    for r in range(reps):
        tests = np.concatenate([f.test_idx for f in folds if f.repetition == r])
        assert np.array_equal(np.sort(tests), np.arange(n))
    for f in folds:
        allidx = np.concatenate([f.train_idx, f.validation_idx, f.test_idx])
        assert np.array_equal(np.sort(allidx), np.arange(n))


def test_spectra_set_invariants():
    with pytest.raises(ValueError):
        SpectraSet(WavelengthAxis([1.0, 2.0]), np.ones((2, 3)), np.zeros(2))
    with pytest.raises(ValueError):
        SpectraSet(WavelengthAxis([1.0, 2.0]), np.ones((2, 2)), np.zeros(3))
    with pytest.raises(ParseError):
        SpectraSet(WavelengthAxis([1.0, 2.0]), np.array([[1.0, np.nan], [1, 1]]), np.zeros(2))
