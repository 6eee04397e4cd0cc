import csv
import json

import numpy as np
import pytest

from specal import pipeline as pl
from specal import tuning
from specal.errors import AllFoldsFailedError, ParameterError
from specal.mlp import MlpArchitecture, TrainConfig
from specal.preprocess import PreprocessConfig, SavGolParams, Technique
from specal.spectra import SplitPlan

FAST = TrainConfig(max_epochs=120, learning_rate=0.2, patience=30)


class StubEvaluator:
    """Returns preset validation R² samples keyed by a function of the spec."""

    def __init__(self, fn):
        self.fn = fn
        self.seen = []

    def run(self, specs):
        self.seen.extend(specs)
        out = []
        for s in specs:
            r2 = np.asarray(self.fn(s), dtype=float)
            out.append(tuning.CellResult(s, r2, r2 - 0.01))
        return out


def tiny_grid(**kw):
    base = dict(
        techniques=(Technique.RAW, Technique.SNV), phase1_thresholds=(50, 100), savgol_widths=(7, 15),
        architectures=(MlpArchitecture((5,)), MlpArchitecture((3, 3))), phase3_thresholds=(10, 50, 100),
        train=FAST, plan=SplitPlan(4, 1, 2 / 9, 0),
    )
    base.update(kw)
    return tuning.GridSpec(**base)


def test_grid_axes():
    assert len(tuning.savgol_pairs()) == 15
    assert all(d <= p for p, d in tuning.savgol_pairs())
    assert (1, 2) not in tuning.savgol_pairs()
    archs = tuning.architecture_grid(range(0, 201, 10))
    assert len(archs) == 21 * 21 - 1 - 20
    assert MlpArchitecture((10,)) in archs and MlpArchitecture((180, 10)) in archs
    g = tuning.GridSpec.full()
    assert len(g.techniques) * 2 * len(g.phase1_thresholds) == 140
    assert g.plan.n_repetitions * g.plan.n_folds == 500
    with pytest.raises(ParameterError):
        tiny_grid(phase3_thresholds=())
    with pytest.raises(ParameterError):
        tiny_grid(savgol_widths=(8,))
    assert tuning.GridSpec.from_dict(tiny_grid().to_dict()).to_dict() == tiny_grid().to_dict()


def test_phase1_single_cell_wins():
    g = tiny_grid(techniques=(Technique.SNV,), phase1_thresholds=(100,))
    ev = StubEvaluator(lambda s: [0.5, 0.6] if s.model.kind == "pls" else [float("nan")] * 2)
    with pytest.raises(AllFoldsFailedError):
        tuning.phase1(None, g, evaluator=StubEvaluator(lambda s: []))
    res = tuning.phase1(None, g, evaluator=ev)
    assert res.winner.spec.model.kind == "pls" and len(res.cells) == 2


def test_phase2_least_complex_tie_wins():
    g = tiny_grid(architectures=(MlpArchitecture((180, 10)), MlpArchitecture((10,)), MlpArchitecture((20,))))
    rng = np.random.default_rng(0)
    noise = rng.normal(0, 0.02, 50)
    means = {(180, 10): 0.905, (10,): 0.9, (20,): 0.7}
    ev = StubEvaluator(lambda s: means[s.model.architecture.hidden] + noise)
    res = tuning.phase2(None, g, PreprocessConfig(Technique.SNV), evaluator=ev)
    assert res.notes["best"].endswith("mlp:180,10")
    assert res.winner.spec.model.architecture.hidden == (10,)
    assert all(s.threshold == 100 for s in ev.seen)
    again = tuning.phase2(None, g, PreprocessConfig(Technique.SNV), evaluator=ev)
    assert again.winner.label() == res.winner.label()


def test_phase2_single_architecture():
    g = tiny_grid(architectures=(MlpArchitecture((40,)),))
    res = tuning.phase2(None, g, PreprocessConfig(), evaluator=StubEvaluator(lambda s: [0.1, 0.2, 0.3]))
    assert res.winner.spec.model.architecture.hidden == (40,)


def test_phase3_parsimony_rule():
    base = pl.PipelineSpec(PreprocessConfig(), 100, pl.ModelSpec.pls(3))
    curve = {10: [0.5, 0.52], 20: [0.79, 0.81], 50: [0.8, 0.84], 100: [0.79, 0.8]}
    res = tuning.phase3(None, tiny_grid(), base, thresholds=(10, 20, 50, 100), evaluator=StubEvaluator(lambda s: curve[int(s.threshold)]))
    # best 50 has mean 0.82, std ~0.028: 20 (mean 0.80) is inside the band, 10 is not
    assert res.winner.spec.threshold == 20
    only = tuning.phase3(None, tiny_grid(), base, thresholds=(100,), evaluator=StubEvaluator(lambda s: [0.1, 0.2]))
    assert only.winner.spec.threshold == 100


def test_savgol_search_letters_and_table():
    rng = np.random.default_rng(1)
    g = tiny_grid()

    def fn(s):
        sg = s.prep.savgol
        return 0.9 - 0.03 * sg.deriv - 0.001 * sg.width + rng.normal(0, 0.01, 30)

    res = tuning.savgol_search(None, g, pl.ModelSpec.mlp((5,), FAST), evaluator=StubEvaluator(fn))
    assert len(res.tukey_cells) == 15
    tk = res.tukey
    P = tk.p_matrix()
    for i in range(15):
        for j in range(i + 1, 15):
            assert tk.shares_letter(i, j) == (P[i, j] >= 0.01)
    # winner comes from the top letter group
    top = tuning._best(list(res.tukey_cells))
    assert tk.shares_letter(res.tukey_cells.index(res.winner), res.tukey_cells.index(top))
    text = tuning.savgol_table_text(res)
    assert len(text.splitlines()) == 1 + 15 + 3
    assert "p < 0.01" in text


def test_real_pipeline_small(tmp_path, small_synth):
    data, _ = small_synth
    g = tiny_grid()
    progress = []
    ev = tuning.Evaluator(data, g.plan, 1, tmp_path / "journal", lambda *a: progress.append(a))
    r1 = tuning.phase1(data, g, evaluator=ev)
    assert len(r1.cells) == 2 * 2 * 2
    assert [p[0] for p in progress] == sorted(p[0] for p in progress)
    r1.write(tmp_path, "phase1")
    rows = list(csv.DictReader(open(tmp_path / "phase1_results.csv")))
    samples = list(csv.DictReader(open(tmp_path / "phase1_samples.csv")))
    for i, row in enumerate(rows):
        vals = [float(s["r2"]) for s in samples if int(s["cell"]) == i]
        assert float(row["mean"]) == float(np.mean(vals))
        assert float(row["max"]) == max(vals)
    w = json.loads((tmp_path / "phase1_winner.json").read_text())
    assert w["label"] == r1.winner.label()

    # a second evaluator reads everything back from the journal
    ev2 = tuning.Evaluator(data, g.plan, 1, tmp_path / "journal")
    again = tuning.phase1(data, g, evaluator=ev2)
    for a, b in zip(r1.cells, again.cells):
        assert np.array_equal(a.r2, b.r2)


def test_run_all_small(tmp_path, small_synth):
    data, _ = small_synth
    g = tiny_grid(savgol_orders=((1, 1), (2, 1), (2, 2)))
    run = tuning.run_all(data, g, tmp_path, jobs=1)
    for name in ("phase1", "savgol", "phase2", "phase3"):
        assert (tmp_path / f"{name}_results.csv").exists() and (tmp_path / f"{name}_winner.json").exists()
    assert (tmp_path / "savgol_table.txt").exists()
    table = run.final.summary_table()
    assert set(table) == {"train", "validation", "test"}
    assert set(table["test"]) == {"n", "r_squared", "mae", "rmse", "f_statistic", "p_value"}
    # summary values recompute from the persisted per-fold CSV
    rows = list(csv.DictReader(open(tmp_path / "final_folds.csv")))
    test_r2 = [float(r["r2"]) for r in rows if r["subset"] == "test"]
    assert table["test"]["r_squared"]["mean"] == float(np.mean(test_r2))
    assert table["test"]["r_squared"]["std"] == float(np.std(test_r2, ddof=1))
    fitted = pl.FittedPipeline.load(tmp_path / "final_model.json")
    assert fitted.spec == run.phase3.winner.spec


def test_finalize_perfect_linear(rng):
    from conftest import make_set
    X = rng.uniform(0.2, 0.8, (50, 10))
    data = make_set(X, X @ rng.standard_normal(10) + 5)
    res = tuning.finalize(data, pl.PipelineSpec(PreprocessConfig(), 100, pl.ModelSpec.pls(10)), SplitPlan(5, 1, 2 / 9, 0), 1)
    t = res.summary_table()
    for s in ("train", "validation", "test"):
        assert t[s]["r_squared"]["min"] == pytest.approx(1.0, abs=1e-9)
        assert t[s]["mae"]["max"] < 1e-9 and t[s]["rmse"]["max"] < 1e-9
    assert "F-statistic vs. constant model" in res.summary_text()
