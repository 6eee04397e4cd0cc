"""Repeated k-fold cross-validation of preprocessing/selection/model pipelines.

One task per (repetition, fold). Within a task the row-wise preprocessing
and the correlation ranking are shared by every (threshold, model) variant
being evaluated, which is what makes grid searches affordable. Results are
reduced in (repetition, fold) order, so reports do not depend on the worker
count or scheduling.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import features, pipeline as pl
from . import preprocess as pp
from .errors import AllFoldsFailedError, SpecalError
from .metrics import Metrics, compute_metrics
from .spectra import FoldAssignment, SpectraSet, SplitPlan, format_float, make_folds

SUBSETS = ("train", "validation", "test")
METRICS = ("r_squared", "mae", "rmse", "f_statistic", "p_value")
_CSV_COLS = {"r2": "r_squared", "mae": "mae", "rmse": "rmse", "f": "f_statistic", "p": "p_value"}


def cell_seed(master: int, repetition: int, fold: int) -> int:
    """Model-initialisation seed for one CV cell, independent of the data."""
    return int(np.random.SeedSequence([int(master), int(repetition), int(fold)]).generate_state(1)[0])


@dataclass(frozen=True)
class FoldRecord:
    repetition: int
    fold: int
    subset: str
    metrics: Metrics


@dataclass(frozen=True)
class FoldFailure:
    repetition: int
    fold: int
    error: str


@dataclass(frozen=True, eq=False)
class CvReport:
    spec: pl.PipelineSpec
    plan: SplitPlan
    records: tuple = ()
    failures: tuple = ()

    def values(self, subset: str = "validation", metric: str = "r_squared") -> np.ndarray:
        return np.array([getattr(r.metrics, metric) for r in self.records if r.subset == subset])

    def aggregate(self) -> dict:
        """``{subset: {metric: {"mean", "std", "min", "max"}}}`` with sample std."""
        out = {}
        for s in SUBSETS:
            out[s] = {}
            for m in METRICS + ("n",):
                v = self.values(s, m).astype(float)
                out[s][m] = summarize(v)
        return out

    @property
    def n_failed(self) -> int:
        return len(self.failures)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rep", "fold", "subset", *_CSV_COLS])
            for r in self.records:
                w.writerow([r.repetition, r.fold, r.subset, *(format_float(getattr(r.metrics, m)) for m in _CSV_COLS.values())])

    def to_dict(self) -> dict:
        return {
            "pipeline": self.spec.to_dict(),
            "pipeline_label": self.spec.label(),
            "plan": {
                "n_folds": self.plan.n_folds,
                "n_repetitions": self.plan.n_repetitions,
                "validation_fraction": self.plan.validation_fraction,
                "seed": self.plan.seed,
            },
            "f_test": "regression of actual on predicted vs constant model",
            "aggregate": self.aggregate(),
            "records": [
                {"rep": r.repetition, "fold": r.fold, "subset": r.subset, **r.metrics.as_dict()} for r in self.records
            ],
            "failures": [{"rep": f.repetition, "fold": f.fold, "error": f.error} for f in self.failures],
        }

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(_jsonable(self.to_dict()), indent=1), encoding="utf-8")


def summarize(v: np.ndarray) -> dict:
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return {"mean": math.nan, "std": math.nan, "min": math.nan, "max": math.nan}
    with np.errstate(invalid="ignore"):  # inf entries (exact fits) give a nan spread
        return {
            "mean": float(np.mean(v)),
            "std": float(np.std(v, ddof=1)) if v.size > 1 else math.nan,
            "min": float(np.min(v)),
            "max": float(np.max(v)),
        }


def _jsonable(obj):
    """Replace non-finite floats by strings so the output is strict JSON."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def read_report_csv(path) -> list[dict]:
    """Rows of a report CSV with numeric fields parsed back to float."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["rep"] = int(r["rep"])
        r["fold"] = int(r["fold"])
        for k in _CSV_COLS:
            r[k] = float(r[k])
    return rows


# --- engine ---------------------------------------------------------------

Variant = tuple  # (threshold, ModelSpec)

_STATE: dict = {}


def _init_worker(data: SpectraSet, prep: pp.PreprocessConfig, variants, plan_seed: int) -> None:
    _STATE.clear()
    _STATE.update(data=data, prep=prep, variants=variants, seed=plan_seed, pre=None, pre_error=None)
    if prep.technique is not pp.Technique.MSC:
        try:
            _STATE["pre"] = pp.transform(prep, data.samples, data.axis)
        except SpecalError as exc:
            _STATE["pre_error"] = f"{type(exc).__name__}: {exc}"


def _run_fold(fa: FoldAssignment):
    """All variants on one fold: list of ``[(subset, Metrics), ...]`` or an error string."""
    data: SpectraSet = _STATE["data"]
    prep = _STATE["prep"]
    variants = _STATE["variants"]
    if _STATE["pre_error"] is not None:
        return [_STATE["pre_error"]] * len(variants)
    try:
        if prep.technique is pp.Technique.MSC:
            ref = pp.msc_fit(data.samples[fa.train_idx])
            X = pp.transform(prep, data.samples, data.axis, ref)
        else:
            X = _STATE["pre"]
    except SpecalError as exc:
        return [f"{type(exc).__name__}: {exc}"] * len(variants)

    y = data.targets
    Xt, yt = X[fa.train_idx], y[fa.train_idx]
    ranking = None
    seed = cell_seed(_STATE["seed"], fa.repetition, fa.fold)
    out = []
    for threshold, model_spec in variants:
        try:
            if threshold >= 100:
                cols = np.arange(X.shape[1])
            else:
                if ranking is None:
                    ranking = features.rank_by_correlation(Xt, yt)
                cols = features.select_threshold(ranking, threshold).retained
            Xs = X[:, cols]
            model = pl.fit_model(model_spec, Xs[fa.train_idx], yt, Xs[fa.validation_idx], y[fa.validation_idx], seed)
            res = []
            for name, idx in zip(SUBSETS, (fa.train_idx, fa.validation_idx, fa.test_idx)):
                res.append((name, compute_metrics(y[idx], pl.predict_features(model, Xs[idx]))))
            out.append(res)
        except (SpecalError, FloatingPointError, np.linalg.LinAlgError) as exc:
            out.append(f"{type(exc).__name__}: {exc}")
    return out


def default_jobs() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:  # pragma: no cover - non-Linux
        return max(1, os.cpu_count() or 1)


def evaluate_variants(
    data: SpectraSet,
    plan: SplitPlan,
    prep: pp.PreprocessConfig,
    variants: Sequence[Variant],
    jobs: int | None = None,
    folds: Sequence[FoldAssignment] | None = None,
) -> list[CvReport]:
    """One :class:`CvReport` per ``(threshold, ModelSpec)`` variant, all sharing a preprocessing."""
    variants = [(float(t), m) for t, m in variants]
    specs = [pl.PipelineSpec(prep, t, m) for t, m in variants]
    folds = list(folds) if folds is not None else make_folds(data.n_samples, plan)
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    init = (data, prep, variants, plan.seed)
    if jobs == 1 or len(folds) == 1:
        _init_worker(*init)
        results = [_run_fold(fa) for fa in folds]
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=init) as ex:
            results = list(ex.map(_run_fold, folds, chunksize=max(1, len(folds) // (4 * jobs))))

    reports = []
    for v, spec in enumerate(specs):
        records, failures = [], []
        for fa, res in sorted(zip(folds, results), key=lambda p: (p[0].repetition, p[0].fold)):
            r = res[v]
            if isinstance(r, str):
                failures.append(FoldFailure(fa.repetition, fa.fold, r))
            else:
                records.extend(FoldRecord(fa.repetition, fa.fold, s, m) for s, m in r)
        reports.append(CvReport(spec, plan, tuple(records), tuple(failures)))
    return reports


def run_repeated_cv(data: SpectraSet, plan: SplitPlan, spec: pl.PipelineSpec, jobs: int | None = None) -> CvReport:
    report = evaluate_variants(data, plan, spec.prep, [(spec.threshold, spec.model)], jobs)[0]
    if not report.records:
        first = report.failures[0].error if report.failures else "no folds"
        raise AllFoldsFailedError(f"every fold failed; first error: {first}")
    return report
