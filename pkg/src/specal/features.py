"""Univariate wavelength ranking by absolute Pearson correlation with the target.

A threshold ``T`` (percent) keeps the ``ceil(T/100 * p)`` best-ranked
wavelengths, never fewer than one. Rankings must be computed on training
rows only; the functions take pre-sliced matrices so leakage cannot happen
through this API.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateError, ParameterError, ShapeError
from .spectra import WavelengthAxis, format_float


@dataclass(frozen=True, eq=False)
class FeatureRanking:
    scores: np.ndarray
    order: np.ndarray
    zero_variance: np.ndarray  # boolean mask of columns scored 0 for lack of variance

    @property
    def n_features(self) -> int:
        return self.scores.size

    def ranks(self) -> np.ndarray:
        """1-based rank of each column (inverse of ``order``)."""
        r = np.empty_like(self.order)
        r[self.order] = np.arange(1, self.order.size + 1)
        return r


@dataclass(frozen=True, eq=False)
class ThresholdSelection:
    threshold: float
    retained: np.ndarray


def rank_by_correlation(X, y) -> FeatureRanking:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ShapeError(f"incompatible shapes {X.shape} and {y.shape}")
    if X.shape[0] < 3:
        raise ParameterError("correlation ranking needs at least 3 samples")
    yc = y - y.mean()
    syy = yc @ yc
    if syy == 0:
        raise DegenerateError("target is constant; correlations are undefined")
    Xc = X - X.mean(axis=0)
    sxx = np.einsum("ij,ij->j", Xc, Xc)
    dead = sxx == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (Xc.T @ yc) / np.sqrt(sxx * syy)
    scores = np.where(dead, 0.0, np.minimum(np.abs(r), 1.0))
    # stable sort on -score keeps lower indices first among ties
    order = np.argsort(-scores, kind="stable")
    for a in (scores, order, dead):
        a.setflags(write=False)
    return FeatureRanking(scores, order, dead)


def n_retained(threshold: float, p: int) -> int:
    if not 0 < threshold <= 100:
        raise ParameterError(f"threshold must lie in (0, 100], got {threshold}")
    # round before ceil so 48/100*331 style products don't pick up float fuzz
    return max(1, min(p, math.ceil(round(threshold / 100.0 * p, 9))))


def select_threshold(ranking: FeatureRanking, threshold: float) -> ThresholdSelection:
    k = n_retained(threshold, ranking.n_features)
    kept = np.sort(ranking.order[:k])
    kept.setflags(write=False)
    return ThresholdSelection(float(threshold), kept)


def save_ranking_csv(ranking: FeatureRanking, axis: WavelengthAxis, path) -> None:
    if len(axis) != ranking.n_features:
        raise ShapeError("axis length does not match ranking")
    ranks = ranking.ranks()
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["wavelength_nm", "abs_r", "rank"])
        for j in range(ranking.n_features):
            w.writerow([format_float(axis.values[j]), format_float(ranking.scores[j]), int(ranks[j])])
