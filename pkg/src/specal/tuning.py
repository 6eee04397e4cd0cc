"""Three-phase grid search plus the Savitzky-Golay parameter search.

Phase 1 crosses models x techniques x thresholds; the Savitzky-Golay search
sweeps width for every admissible (poly, deriv) pair and compares the best
widths with Tukey HSD; phase 2 sweeps MLP architectures at threshold 100;
phase 3 sweeps the threshold for the chosen pipeline. Every cell is scored
by its validation R² over the same repeated-CV folds, so cells are directly
comparable and results do not depend on evaluation order.

Completed cells are journaled (one JSON file per cell) so an interrupted
search resumes where it stopped.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import cv, mlp
from . import pipeline as pl
from . import preprocess as pp
from .errors import AllFoldsFailedError, ParameterError, SpecalError
from .spectra import SpectraSet, SplitPlan, format_float, make_folds
from .stats import TukeyResult, tukey_hsd

ALPHA = 0.01


def savgol_pairs(max_order: int = 5) -> tuple:
    """All (poly, deriv) with 1 <= deriv <= poly <= max_order."""
    return tuple((p, d) for p in range(1, max_order + 1) for d in range(1, p + 1))


def architecture_grid(sizes: Sequence[int]) -> tuple:
    """One- and two-layer nets from a size axis where 0 means 'no layer'."""
    seen = set()
    out = []
    for a in sizes:
        for b in sizes:
            if a == 0 and b == 0:
                continue
            arch = mlp.MlpArchitecture.from_grid(a, b) if a else mlp.MlpArchitecture.from_grid(b)
            if arch not in seen:
                seen.add(arch)
                out.append(arch)
    return tuple(sorted(out, key=lambda m: m.complexity()))


@dataclass(frozen=True)
class GridSpec:
    techniques: tuple = tuple(pp.Technique)
    phase1_thresholds: tuple = tuple(range(10, 101, 10))
    phase1_savgol: pp.SavGolParams = pp.SavGolParams(5, 2, 2)
    pls_components: int = 10
    phase1_hidden: tuple = (10,)
    savgol_widths: tuple = tuple(range(3, 102, 2))
    savgol_orders: tuple = savgol_pairs()
    architectures: tuple = architecture_grid(range(0, 201, 10))
    phase3_thresholds: tuple = tuple(range(1, 101))
    train: mlp.TrainConfig = mlp.TrainConfig()
    plan: SplitPlan = SplitPlan(10, 50, 2 / 9, 0)

    def __post_init__(self):
        object.__setattr__(self, "techniques", tuple(pp.Technique(t) for t in self.techniques))
        object.__setattr__(self, "architectures", tuple(
            a if isinstance(a, mlp.MlpArchitecture) else mlp.MlpArchitecture(tuple(a)) for a in self.architectures
        ))
        object.__setattr__(self, "savgol_orders", tuple(tuple(v) for v in self.savgol_orders))
        for name in ("techniques", "phase1_thresholds", "savgol_widths", "savgol_orders", "architectures", "phase3_thresholds"):
            if not getattr(self, name):
                raise ParameterError(f"grid axis '{name}' is empty")
        for t in self.phase1_thresholds + self.phase3_thresholds:
            if not 0 < t <= 100:
                raise ParameterError(f"threshold {t} outside (0, 100]")
        for w in self.savgol_widths:
            if w % 2 == 0 or not 3 <= w <= pp.MAX_WIDTH:
                raise ParameterError(f"savgol width {w} must be odd in 3..{pp.MAX_WIDTH}")
        for p, d in self.savgol_orders:
            if not 1 <= d <= p <= pp.MAX_ORDER:
                raise ParameterError(f"savgol order pair ({p}, {d}) violates 1 <= d <= p <= {pp.MAX_ORDER}")

    @classmethod
    def full(cls, seed: int = 0) -> "GridSpec":
        """Full-size axes: 50 x 10-fold CV, every width, 21 x 21 architectures."""
        return cls(plan=SplitPlan(10, 50, 2 / 9, seed))

    @classmethod
    def desk(cls, seed: int = 0) -> "GridSpec":
        """Reduced axes that finish in well under half an hour on one core."""
        return cls(
            savgol_widths=(7, 15, 25, 41, 67, 101),
            architectures=tuple(mlp.MlpArchitecture(h) for h in ((10,), (20,), (40,), (80,), (10, 10), (20, 10), (40, 10))),
            phase3_thresholds=tuple(range(5, 101, 5)),
            train=mlp.DESK_TRAIN,
            plan=SplitPlan(10, 5, 2 / 9, seed),
        )

    def pls_spec(self) -> pl.ModelSpec:
        return pl.ModelSpec.pls(self.pls_components)

    def mlp_spec(self, hidden=None) -> pl.ModelSpec:
        return pl.ModelSpec.mlp(self.phase1_hidden if hidden is None else hidden, self.train)

    def to_dict(self) -> dict:
        return {
            "techniques": [int(t) for t in self.techniques],
            "phase1_thresholds": list(self.phase1_thresholds),
            "phase1_savgol": [self.phase1_savgol.width, self.phase1_savgol.poly, self.phase1_savgol.deriv],
            "pls_components": self.pls_components,
            "phase1_hidden": list(self.phase1_hidden),
            "savgol_widths": list(self.savgol_widths),
            "savgol_orders": [list(v) for v in self.savgol_orders],
            "architectures": [list(a.hidden) for a in self.architectures],
            "phase3_thresholds": list(self.phase3_thresholds),
            "train": self.train.to_dict(),
            "plan": {
                "n_folds": self.plan.n_folds,
                "n_repetitions": self.plan.n_repetitions,
                "validation_fraction": self.plan.validation_fraction,
                "seed": self.plan.seed,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        base = cls.desk() if d.get("preset") == "desk" else cls()
        kw = {}
        if "techniques" in d:
            kw["techniques"] = tuple(d["techniques"])
        for name in ("phase1_thresholds", "savgol_widths", "phase3_thresholds", "phase1_hidden"):
            if name in d:
                kw[name] = tuple(d[name])
        if "phase1_savgol" in d:
            kw["phase1_savgol"] = pp.SavGolParams(*d["phase1_savgol"])
        if "pls_components" in d:
            kw["pls_components"] = int(d["pls_components"])
        if "savgol_orders" in d:
            kw["savgol_orders"] = tuple(tuple(v) for v in d["savgol_orders"])
        if "architectures" in d:
            kw["architectures"] = tuple(mlp.MlpArchitecture(tuple(a)) for a in d["architectures"])
        if "train" in d:
            kw["train"] = mlp.TrainConfig.from_dict(d["train"])
        if "plan" in d:
            kw["plan"] = SplitPlan(**d["plan"])
        return replace(base, **kw)


@dataclass(frozen=True, eq=False)
class CellResult:
    spec: pl.PipelineSpec
    r2: np.ndarray  # validation R², one per successful (repetition, fold)
    test_r2: np.ndarray
    n_failed: int = 0
    first_error: str = ""

    @property
    def ok(self) -> bool:
        return self.r2.size > 0

    @property
    def mean(self) -> float:
        return float(self.r2.mean()) if self.ok else math.nan

    @property
    def std(self) -> float:
        return float(self.r2.std(ddof=1)) if self.r2.size > 1 else math.nan

    @property
    def min(self) -> float:
        return float(self.r2.min()) if self.ok else math.nan

    @property
    def max(self) -> float:
        return float(self.r2.max()) if self.ok else math.nan

    def label(self) -> str:
        return self.spec.label()


@dataclass(frozen=True, eq=False)
class PhaseResult:
    phase: str
    cells: tuple
    winner: CellResult
    tukey: TukeyResult | None = None
    tukey_cells: tuple = ()  # cells entering the Tukey comparison, aligned with tukey.labels
    notes: dict = field(default_factory=dict)

    def cell(self, label: str) -> CellResult:
        for c in self.cells:
            if c.label() == label:
                return c
        raise KeyError(label)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cell", "model", "technique", "savgol", "threshold", "n", "mean", "std", "min", "max", "test_mean", "n_failed"])
            for i, c in enumerate(self.cells):
                s = c.spec
                sg = s.prep.savgol
                w.writerow([
                    i,
                    s.model.label(),
                    int(s.prep.technique),
                    "" if sg is None else f"{sg.width}/{sg.poly}/{sg.deriv}",
                    format_float(s.threshold),
                    c.r2.size,
                    *(format_float(v) for v in (c.mean, c.std, c.min, c.max)),
                    format_float(float(c.test_r2.mean()) if c.test_r2.size else math.nan),
                    c.n_failed,
                ])

    def samples_to_csv(self, path) -> None:
        """Raw validation R² samples, so every per-cell statistic can be recomputed."""
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cell", "sample", "r2"])
            for i, c in enumerate(self.cells):
                for j, v in enumerate(c.r2):
                    w.writerow([i, j, format_float(v)])

    def winner_dict(self) -> dict:
        c = self.winner
        return {
            "phase": self.phase,
            "pipeline": c.spec.to_dict(),
            "label": c.label(),
            "validation_r2": {"mean": c.mean, "std": c.std, "min": c.min, "max": c.max, "n": int(c.r2.size)},
            "notes": self.notes,
        }

    def write(self, outdir, name: str) -> None:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        self.to_csv(out / f"{name}_results.csv")
        self.samples_to_csv(out / f"{name}_samples.csv")
        (out / f"{name}_winner.json").write_text(json.dumps(cv._jsonable(self.winner_dict()), indent=1), encoding="utf-8")


ProgressFn = Callable[[int, int, str], None]


class Evaluator:
    """Runs groups of cells through the CV engine, with an optional journal."""

    def __init__(self, data: SpectraSet, plan: SplitPlan, jobs: int | None = None, journal=None,
                 progress: ProgressFn | None = None):
        self.data = data
        self.plan = plan
        self.jobs = jobs
        self.folds = make_folds(data.n_samples, plan)
        self.journal = Path(journal) if journal is not None else None
        if self.journal is not None:
            self.journal.mkdir(parents=True, exist_ok=True)
        self.progress = progress
        self._data_key = hashlib.sha256(
            data.samples.tobytes() + data.targets.tobytes() + data.axis.values.tobytes()
        ).hexdigest()[:16]

    def _key(self, spec: pl.PipelineSpec) -> str:
        doc = json.dumps({"data": self._data_key, "plan": [self.plan.n_folds, self.plan.n_repetitions,
                          self.plan.validation_fraction, self.plan.seed], "spec": spec.to_dict()}, sort_keys=True)
        return hashlib.sha256(doc.encode()).hexdigest()[:24]

    def _load(self, spec):
        if self.journal is None:
            return None
        f = self.journal / f"{self._key(spec)}.json"
        if not f.exists():
            return None
        d = json.loads(f.read_text(encoding="utf-8"))
        return CellResult(spec, np.array(d["r2"], dtype=float), np.array(d["test_r2"], dtype=float), d["n_failed"], d["first_error"])

    def _store(self, c: CellResult) -> None:
        if self.journal is None:
            return
        doc = {"label": c.label(), "r2": c.r2.tolist(), "test_r2": c.test_r2.tolist(), "n_failed": c.n_failed,
               "first_error": c.first_error}
        tmp = self.journal / f"{self._key(c.spec)}.tmp"
        tmp.write_text(json.dumps(doc), encoding="utf-8")
        tmp.replace(self.journal / f"{self._key(c.spec)}.json")

    def run(self, specs: Sequence[pl.PipelineSpec]) -> list[CellResult]:
        """Evaluate cells, sharing preprocessing across cells with the same prep."""
        results: dict[int, CellResult] = {}
        groups = defaultdict(list)
        for i, s in enumerate(specs):
            cached = self._load(s)
            if cached is not None:
                results[i] = cached
            else:
                groups[s.prep].append(i)
        done = len(results)
        for prep, idxs in groups.items():
            reports = cv.evaluate_variants(
                self.data, self.plan, prep, [(specs[i].threshold, specs[i].model) for i in idxs], self.jobs, self.folds
            )
            for i, rep in zip(idxs, reports):
                c = CellResult(
                    specs[i],
                    rep.values("validation", "r_squared"),
                    rep.values("test", "r_squared"),
                    rep.n_failed,
                    rep.failures[0].error if rep.failures else "",
                )
                self._store(c)
                results[i] = c
            done += len(idxs)
            if self.progress:
                self.progress(done, len(specs), prep.label())
        return [results[i] for i in range(len(specs))]


def _require_ok(cells, phase: str) -> list[CellResult]:
    ok = [c for c in cells if c.ok and np.isfinite(c.mean)]
    if not ok:
        first = next((c.first_error for c in cells if c.first_error), "no successful folds")
        raise AllFoldsFailedError(f"{phase}: every cell failed; first error: {first}")
    return ok


def _best(cells: Sequence[CellResult]) -> CellResult:
    """Greatest mean, then smallest std, then label order (a total order)."""
    return min(cells, key=lambda c: (-c.mean, c.std if np.isfinite(c.std) else math.inf, c.label()))


def _tukey(cells: Sequence[CellResult], labels: Sequence[str], alpha: float) -> TukeyResult | None:
    usable = [(lab, c.r2) for lab, c in zip(labels, cells) if c.r2.size >= 2]
    if len(usable) < 2 or len(usable) != len(cells):
        return None
    try:
        return tukey_hsd(usable, alpha)
    except SpecalError:  # degenerate variance: no comparison possible
        return None


# --- phases ---------------------------------------------------------------


def phase1(data: SpectraSet, grid: GridSpec, jobs: int | None = None, evaluator: Evaluator | None = None) -> PhaseResult:
    ev = evaluator or Evaluator(data, grid.plan, jobs)
    specs = []
    for tech in grid.techniques:
        prep = pp.PreprocessConfig(tech, grid.phase1_savgol if tech is pp.Technique.SAVGOL else None)
        for model in (grid.pls_spec(), grid.mlp_spec()):
            for t in grid.phase1_thresholds:
                specs.append(pl.PipelineSpec(prep, t, model))
    cells = ev.run(specs)
    ok = _require_ok(cells, "phase 1")
    winner = _best(ok)
    by_model = {}
    for kind in ("pls", "mlp"):
        sub = [c for c in ok if c.spec.model.kind == kind]
        if sub:
            b = _best(sub)
            by_model[kind] = {"label": b.label(), "mean": b.mean, "std": b.std}
    return PhaseResult("phase1", tuple(cells), winner, notes={"best_by_model": by_model,
                                                             "algorithm": winner.spec.model.kind,
                                                             "technique": int(winner.spec.prep.technique)})


def savgol_search(data: SpectraSet, grid: GridSpec, model: pl.ModelSpec | None = None, threshold: float = 100.0,
                  jobs: int | None = None, evaluator: Evaluator | None = None, alpha: float = ALPHA) -> PhaseResult:
    model = model or grid.mlp_spec()
    ev = evaluator or Evaluator(data, grid.plan, jobs)
    specs = []
    for p, d in grid.savgol_orders:
        for w in grid.savgol_widths:
            if p < w:
                specs.append(pl.PipelineSpec(pp.PreprocessConfig(pp.Technique.SAVGOL, pp.SavGolParams(w, p, d)), threshold, model))
    cells = ev.run(specs)
    _require_ok(cells, "savgol search")
    best_per_pair = []
    for p, d in grid.savgol_orders:
        sub = [c for c in cells if c.ok and (c.spec.prep.savgol.poly, c.spec.prep.savgol.deriv) == (p, d)]
        if sub:
            best_per_pair.append(_best(sub))
    labels = [f"{c.spec.prep.savgol.poly}/{c.spec.prep.savgol.deriv}" for c in best_per_pair]
    tk = _tukey(best_per_pair, labels, alpha)
    top = _best(best_per_pair)
    if tk is not None:
        ti = best_per_pair.index(top)
        group = [c for i, c in enumerate(best_per_pair) if tk.shares_letter(i, ti)]
        winner = _best(group)
    else:
        winner = top
    return PhaseResult("savgol", tuple(cells), winner, tk, tuple(best_per_pair), notes={"alpha": alpha})


def phase2(data: SpectraSet, grid: GridSpec, prep: pp.PreprocessConfig, jobs: int | None = None,
           evaluator: Evaluator | None = None, alpha: float = ALPHA, threshold: float = 100.0) -> PhaseResult:
    ev = evaluator or Evaluator(data, grid.plan, jobs)
    specs = [pl.PipelineSpec(prep, threshold, grid.mlp_spec(a)) for a in grid.architectures]
    cells = ev.run(specs)
    ok = _require_ok(cells, "phase 2")
    best = _best(ok)
    labels = [c.spec.model.architecture.label() for c in ok]
    tk = _tukey(ok, labels, alpha)
    if tk is not None:
        bi = ok.index(best)
        tied = [c for i, c in enumerate(ok) if i == bi or not tk.significant(i, bi)]
    else:
        tied = [best]
    winner = min(tied, key=lambda c: c.spec.model.architecture.complexity())
    return PhaseResult("phase2", tuple(cells), winner, tk, tuple(ok), notes={
        "alpha": alpha, "best": best.label(), "tied_with_best": [c.spec.model.architecture.label() for c in tied]})


def phase3(data: SpectraSet, grid: GridSpec, base: pl.PipelineSpec, thresholds: Sequence[float] | None = None,
           jobs: int | None = None, evaluator: Evaluator | None = None) -> PhaseResult:
    ev = evaluator or Evaluator(data, grid.plan, jobs)
    axis = tuple(thresholds) if thresholds is not None else grid.phase3_thresholds
    specs = [replace(base, threshold=float(t)) for t in axis]
    cells = ev.run(specs)
    ok = _require_ok(cells, "phase 3")
    best = _best(ok)
    band = best.mean - (best.std if np.isfinite(best.std) else 0.0)
    within = [c for c in ok if c.mean >= band]
    winner = min(within, key=lambda c: c.spec.threshold)
    return PhaseResult("phase3", tuple(cells), winner, notes={
        "rule": "smallest threshold whose mean validation R2 is within one std of the best",
        "best": best.label(), "best_mean": best.mean, "best_std": best.std})


# --- reports --------------------------------------------------------------


def savgol_table_text(result: PhaseResult) -> str:
    """Savitzky-Golay search summary: one row per (poly, deriv) at its best width."""
    tk = result.tukey
    rows = ["poly  deriv  width    mean ± std          min       max       Tukey HSD"]
    for i, c in enumerate(result.tukey_cells):
        sg = c.spec.prep.savgol
        letters = tk.letters[i] if tk is not None else "-"
        rows.append(
            f"{sg.poly:>4}  {sg.deriv:>5}  {sg.width:>5}    {c.mean:.4f} ± {c.std:.4f}    {c.min:.4f}    {c.max:.4f}    {letters}"
        )
    alpha = result.notes.get("alpha", ALPHA)
    rows.append("")
    rows.append(f"Rows with different letters differ significantly (Tukey HSD, p < {alpha:g}).")
    w = result.winner.spec.prep.savgol
    rows.append(f"Selected: width {w.width}, poly {w.poly}, deriv {w.deriv}")
    return "\n".join(rows) + "\n"


@dataclass(frozen=True, eq=False)
class FinalResult:
    report: cv.CvReport
    pipeline: pl.FittedPipeline
    best_cell: tuple  # (repetition, fold) of the persisted model

    def summary_table(self) -> dict:
        agg = self.report.aggregate()
        return {s: {m: agg[s][m] for m in ("n", "r_squared", "mae", "rmse", "f_statistic", "p_value")} for s in cv.SUBSETS}

    def summary_text(self) -> str:
        t = self.summary_table()
        names = [("n", "n"), ("r_squared", "R-squared"), ("mae", "MAE"), ("rmse", "RMSE"),
                 ("f_statistic", "F-statistic vs. constant model"), ("p_value", "p-value")]
        lines = [f"{'':<32}{'train':>28}{'validation':>28}{'test':>28}"]
        for key, name in names:
            cells = []
            for s in cv.SUBSETS:
                v = t[s][key]
                if key == "n":
                    cells.append(f"{v['mean']:.0f}")
                elif key == "p_value":
                    cells.append(f"{v['mean']:.3g} (max {v['max']:.3g})")
                else:
                    cells.append(f"{v['mean']:.4f} ± {v['std']:.4f}")
            lines.append(f"{name:<32}" + "".join(f"{c:>28}" for c in cells))
        lines.append("")
        lines.append("Mean ± sample std over repetitions x folds; F-test regresses actual on predicted values.")
        return "\n".join(lines) + "\n"

    def write(self, outdir) -> None:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        self.report.to_csv(out / "final_folds.csv")
        self.report.to_json(out / "final_report.json")
        (out / "final_table.txt").write_text(self.summary_text(), encoding="utf-8")
        self.pipeline.save(out / "final_model.json")


def finalize(data: SpectraSet, spec: pl.PipelineSpec, plan: SplitPlan, jobs: int | None = None) -> FinalResult:
    """Repeated CV of the final pipeline; persists the best test-fold model."""
    report = cv.run_repeated_cv(data, plan, spec, jobs)
    tests = [r for r in report.records if r.subset == "test" and np.isfinite(r.metrics.r_squared)]
    if not tests:
        raise AllFoldsFailedError("no fold produced a finite test R-squared")
    best = min(tests, key=lambda r: (-r.metrics.r_squared, r.repetition, r.fold))
    fa = next(f for f in make_folds(data.n_samples, plan) if (f.repetition, f.fold) == (best.repetition, best.fold))
    fitted = pl.fit_pipeline(spec, data, fa.train_idx, fa.validation_idx, cv.cell_seed(plan.seed, fa.repetition, fa.fold))
    return FinalResult(report, fitted, (best.repetition, best.fold))


@dataclass(frozen=True, eq=False)
class TuningRun:
    phase1: PhaseResult
    savgol: PhaseResult
    phase2: PhaseResult
    phase3: PhaseResult
    final: FinalResult


def run_all(data: SpectraSet, grid: GridSpec, outdir=None, jobs: int | None = None, progress: ProgressFn | None = None) -> TuningRun:
    """Phase 1, Savitzky-Golay search, phase 2, phase 3 and finalize in sequence."""
    journal = Path(outdir) / "journal" if outdir is not None else None
    ev = Evaluator(data, grid.plan, jobs, journal, progress)
    r1 = phase1(data, grid, evaluator=ev)
    w1 = r1.winner.spec
    sg_model = w1.model if w1.model.kind == "mlp" else grid.mlp_spec()
    rs = savgol_search(data, grid, sg_model, evaluator=ev)
    prep = rs.winner.spec.prep if w1.prep.technique is pp.Technique.SAVGOL else w1.prep
    r2 = phase2(data, grid, prep, evaluator=ev)
    # the architecture sweep only replaces the model when an MLP won phase 1
    model = r2.winner.spec.model if w1.model.kind == "mlp" else w1.model
    r3 = phase3(data, grid, pl.PipelineSpec(prep, 100.0, model), evaluator=ev)
    fin = finalize(data, r3.winner.spec, grid.plan, jobs)
    if outdir is not None:
        r1.write(outdir, "phase1")
        rs.write(outdir, "savgol")
        (Path(outdir) / "savgol_table.txt").write_text(savgol_table_text(rs), encoding="utf-8")
        r2.write(outdir, "phase2")
        r3.write(outdir, "phase3")
        fin.write(outdir)
    return TuningRun(r1, rs, r2, r3, fin)
