"""Spectra data model, CSV ingestion, replicate averaging and fold planning.

CSV layout::

    # optional comment lines start with '#'
    sample_id,target,740,741,...,1070
    egg00_d00,0,0.4213,0.4220,...

Wavelength headers must be numeric and strictly increasing. Floats are
written with ``repr`` so a save/load round trip is exact.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    AlignmentError,
    EmptyDatasetError,
    FormatError,
    InfeasiblePlanError,
    ParameterError,
    ParseError,
    ShapeError,
)


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def format_float(v: float) -> str:
    """Shortest exact decimal for *v*; integral values lose the trailing ``.0``."""
    s = repr(float(v))
    if s.endswith(".0"):
        s = s[:-2]
    return s


@dataclass(frozen=True, eq=False)
class WavelengthAxis:
    """Strictly increasing wavelengths in nm."""

    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 1 or v.size == 0:
            raise FormatError("wavelength axis must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(v)):
            raise FormatError("wavelength axis contains non-finite values")
        if v.size > 1 and np.any(np.diff(v) <= 0):
            bad = int(np.argmax(np.diff(v) <= 0)) + 1
            raise FormatError(f"wavelengths not strictly increasing at position {bad} ({v[bad]!r})")
        object.__setattr__(self, "values", v)

    @classmethod
    def regular(cls, start: float = 740.0, stop: float = 1070.0, step: float = 1.0) -> "WavelengthAxis":
        n = int(round((stop - start) / step)) + 1
        return cls(start + step * np.arange(n))

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        return isinstance(other, WavelengthAxis) and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())

    def is_uniform(self, rtol: float = 1e-9) -> bool:
        if self.values.size < 3:
            return True
        d = np.diff(self.values)
        return bool(np.max(np.abs(d - d[0])) <= rtol * abs(d[0]))

    def take(self, idx) -> "WavelengthAxis":
        return WavelengthAxis(self.values[np.asarray(idx)])


@dataclass(frozen=True, eq=False)
class SpectraSet:
    """Reflectance matrix ``[n_samples, n_wavelengths]`` with targets and ids.

    Instances are immutable; arrays are read-only views.
    """

    axis: WavelengthAxis
    samples: np.ndarray
    targets: np.ndarray
    sample_ids: tuple = field(default=())

    def __post_init__(self):
        X = _frozen(self.samples)
        y = _frozen(self.targets)
        if X.ndim != 2:
            raise ShapeError(f"samples must be 2-D, got shape {X.shape}")
        ids = tuple(str(s) for s in self.sample_ids) if len(self.sample_ids) else tuple(
            str(i) for i in range(X.shape[0])
        )
        if not (X.shape[0] == y.shape[0] == len(ids)):
            raise ShapeError(
                f"row count mismatch: samples {X.shape[0]}, targets {y.shape[0]}, ids {len(ids)}"
            )
        if X.shape[1] != len(self.axis):
            raise ShapeError(f"samples have {X.shape[1]} columns but axis has {len(self.axis)} points")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ParseError("spectra set contains non-finite values")
        object.__setattr__(self, "samples", X)
        object.__setattr__(self, "targets", y)
        object.__setattr__(self, "sample_ids", ids)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_wavelengths(self) -> int:
        return self.samples.shape[1]

    def take(self, idx) -> "SpectraSet":
        """Row subset in the given index order."""
        idx = np.asarray(idx, dtype=np.intp)
        return SpectraSet(self.axis, self.samples[idx], self.targets[idx], tuple(self.sample_ids[i] for i in idx))

    def with_samples(self, samples: np.ndarray, axis: WavelengthAxis | None = None) -> "SpectraSet":
        return SpectraSet(axis if axis is not None else self.axis, samples, self.targets, self.sample_ids)

    def select_wavelengths(self, idx) -> "SpectraSet":
        idx = np.asarray(idx, dtype=np.intp)
        return SpectraSet(self.axis.take(idx), self.samples[:, idx], self.targets, self.sample_ids)


def load_csv(path) -> SpectraSet:
    """Read a spectra CSV (see module docstring for the layout)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        lines = [(i + 1, ln) for i, ln in enumerate(fh) if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise FormatError(f"{path}: no header row")
    rows = list(csv.reader(ln for _, ln in lines))
    header, body = rows[0], rows[1:]
    header_line = lines[0][0]
    if len(header) < 3 or header[0].strip() != "sample_id" or header[1].strip() != "target":
        raise FormatError(f"{path}:{header_line}: header must start with 'sample_id,target,' then wavelengths")
    try:
        wl = [float(h) for h in header[2:]]
    except ValueError as exc:
        raise FormatError(f"{path}:{header_line}: non-numeric wavelength header ({exc})") from None
    axis = WavelengthAxis(wl)
    if not body:
        raise EmptyDatasetError(f"{path}: header present but no data rows")

    ncol = len(header)
    X = np.empty((len(body), ncol - 2))
    y = np.empty(len(body))
    ids = []
    for r, row in enumerate(body):
        lineno = lines[r + 1][0]
        if len(row) != ncol:
            raise ParseError(f"{path}: row {lineno} has {len(row)} cells, expected {ncol}")
        ids.append(row[0].strip())
        for c in range(1, ncol):
            cell = row[c].strip()
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise ParseError(f"{path}: row {lineno}, column '{header[c].strip()}': bad value {cell!r}")
            if c == 1:
                y[r] = v
            else:
                X[r, c - 2] = v
    return SpectraSet(axis, X, y, tuple(ids))


def save_csv(data: SpectraSet, path, comment: str | None = "target: storage days") -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", "target"] + [format_float(v) for v in data.axis.values])
        for sid, t, row in zip(data.sample_ids, data.targets, data.samples):
            w.writerow([sid, format_float(t)] + [format_float(v) for v in row])


def average_replicates(a: SpectraSet, b: SpectraSet) -> SpectraSet:
    """Element-wise mean of two replicate scans of the same samples."""
    if a.axis != b.axis:
        raise AlignmentError("replicates have different wavelength axes")
    if a.sample_ids != b.sample_ids:
        raise AlignmentError("replicates have different sample ids")
    if not np.array_equal(a.targets, b.targets):
        raise AlignmentError("replicates have different targets")
    return a.with_samples((a.samples + b.samples) / 2)


@dataclass(frozen=True)
class SplitPlan:
    n_folds: int = 10
    n_repetitions: int = 50
    validation_fraction: float = 2 / 9
    seed: int = 0

    def __post_init__(self):
        if int(self.n_folds) != self.n_folds or self.n_folds < 2:
            raise ParameterError(f"n_folds must be an integer >= 2, got {self.n_folds}")
        if int(self.n_repetitions) != self.n_repetitions or self.n_repetitions < 1:
            raise ParameterError(f"n_repetitions must be a positive integer, got {self.n_repetitions}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ParameterError(f"validation_fraction must lie in (0, 1), got {self.validation_fraction}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ParameterError(f"seed must be a non-negative integer, got {self.seed}")


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    """Disjoint sorted index sets for one (repetition, fold) cell."""

    repetition: int
    fold: int
    train_idx: np.ndarray
    validation_idx: np.ndarray
    test_idx: np.ndarray

    def __eq__(self, other):
        return (
            isinstance(other, FoldAssignment)
            and (self.repetition, self.fold) == (other.repetition, other.fold)
            and np.array_equal(self.train_idx, other.train_idx)
            and np.array_equal(self.validation_idx, other.validation_idx)
            and np.array_equal(self.test_idx, other.test_idx)
        )


def fold_sizes(n_samples: int, n_folds: int) -> list[int]:
    """Near-equal fold sizes; the first ``n % k`` folds get one extra sample."""
    q, r = divmod(n_samples, n_folds)
    return [q + 1 if f < r else q for f in range(n_folds)]


def make_folds(n_samples: int, plan: SplitPlan) -> list[FoldAssignment]:
    """Repeated k-fold assignments with a per-fold random validation subset.

    Seed hierarchy: ``plan.seed`` spawns one child per repetition (the
    shuffle), and each repetition spawns one child per fold (the validation
    draw), so any cell can be regenerated independently.
    """
    if n_samples < plan.n_folds:
        raise InfeasiblePlanError(f"{n_samples} samples cannot fill {plan.n_folds} folds")
    sizes = fold_sizes(n_samples, plan.n_folds)
    pool_min = n_samples - sizes[0]
    if pool_min < 2:
        raise InfeasiblePlanError("each fold needs at least 2 non-test samples for train/validation")

    out = []
    rep_seeds = np.random.SeedSequence(plan.seed).spawn(plan.n_repetitions)
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    for rep, rs in enumerate(rep_seeds):
        fold_seeds = rs.spawn(plan.n_folds + 1)
        perm = np.random.default_rng(fold_seeds[0]).permutation(n_samples)
        for f in range(plan.n_folds):
            test = perm[bounds[f]:bounds[f + 1]]
            pool = np.concatenate([perm[: bounds[f]], perm[bounds[f + 1]:]])
            n_val = int(round(plan.validation_fraction * pool.size))
            n_val = min(max(n_val, 1), pool.size - 1)
            shuffled = np.random.default_rng(fold_seeds[f + 1]).permutation(pool)
            out.append(
                FoldAssignment(
                    repetition=rep,
                    fold=f,
                    train_idx=_frozen(np.sort(shuffled[n_val:]), np.intp),
                    validation_idx=_frozen(np.sort(shuffled[:n_val]), np.intp),
                    test_idx=_frozen(np.sort(test), np.intp),
                )
            )
    return out


def concat(sets: Sequence[SpectraSet]) -> SpectraSet:
    """Stack sets sharing one axis."""
    if not sets:
        raise EmptyDatasetError("nothing to concatenate")
    axis = sets[0].axis
    for s in sets[1:]:
        if s.axis != axis:
            raise AlignmentError("cannot concatenate sets with different axes")
    return SpectraSet(
        axis,
        np.vstack([s.samples for s in sets]),
        np.concatenate([s.targets for s in sets]),
        tuple(i for s in sets for i in s.sample_ids),
    )
