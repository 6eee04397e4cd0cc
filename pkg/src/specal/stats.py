"""Tukey HSD with the studentized range distribution and compact letter display.

The range CDF is evaluated by two nested quadratures::

    P(Q <= q; k, nu) = int_0^inf f_nu(s) W_k(q s) ds
    W_k(x)           = k int phi(z) [Phi(z + x) - Phi(z)]^(k-1) dz

where ``s = sqrt(chi2_nu / nu)``. The inner integral uses a fixed
Gauss-Legendre rule on [-9, 9]; the outer one is adaptive over the bulk of
the chi density.
"""

from __future__ import annotations

import math
import string
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special, stats

from .errors import DegenerateError, ParameterError

_Z, _ZW = np.polynomial.legendre.leggauss(256)
_Z = 9.0 * _Z
_ZW = 9.0 * _ZW * np.exp(-0.5 * _Z**2) / math.sqrt(2 * math.pi)
_PHI_Z = special.ndtr(_Z)


def range_cdf_normal(x, k: int):
    """``W_k(x)``: CDF of the range of ``k`` iid standard normals."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    diff = special.ndtr(_Z[None, :] + x[:, None]) - _PHI_Z[None, :]
    w = k * (np.clip(diff, 0.0, 1.0) ** (k - 1)) @ _ZW
    w = np.clip(w, 0.0, 1.0)
    w[x <= 0] = 0.0
    return w


@lru_cache(maxsize=256)
def _chi_bounds(df: float) -> tuple[float, float]:
    lo = math.sqrt(stats.chi2.ppf(1e-14, df) / df)
    hi = math.sqrt(stats.chi2.isf(1e-14, df) / df)
    return lo, hi


def _log_chi_density(s: float, df: float) -> float:
    # density of sqrt(chi2_df / df)
    return (
        (df / 2) * math.log(df)
        - special.gammaln(df / 2)
        - (df / 2 - 1) * math.log(2)
        + (df - 1) * math.log(s)
        - df * s * s / 2
    )


def studentized_range_cdf(q: float, k: int, df: float) -> float:
    if k < 2:
        raise ParameterError("studentized range needs k >= 2")
    if not df > 0:
        raise ParameterError("degrees of freedom must be positive")
    if q <= 0:
        return 0.0
    if math.isinf(q):
        return 1.0
    if math.isinf(df) or df > 1e7:
        return float(range_cdf_normal(q, k)[0])
    lo, hi = _chi_bounds(float(df))
    mode = math.sqrt(max(df - 1, 0.0) / df)

    def integrand(s):
        return math.exp(_log_chi_density(s, df)) * range_cdf_normal(q * s, k)[0]

    pts = [p for p in (mode,) if lo < p < hi]
    val, _ = integrate.quad(integrand, lo, hi, points=pts or None, epsabs=1e-11, epsrel=1e-10, limit=200)
    return min(max(val, 0.0), 1.0)


def studentized_range_sf(q: float, k: int, df: float) -> float:
    return min(max(1.0 - studentized_range_cdf(q, k, df), 0.0), 1.0)


def studentized_range_ppf(p: float, k: int, df: float) -> float:
    """Quantile: the ``q`` with ``P(Q <= q) = p``."""
    if not 0 < p < 1:
        raise ParameterError("probability must lie in (0, 1)")
    hi = 10.0
    while studentized_range_cdf(hi, k, df) < p:
        hi *= 2
    return optimize.brentq(lambda q: studentized_range_cdf(q, k, df) - p, 1e-9, hi, xtol=1e-10)


# --- compact letter display ----------------------------------------------


def _letter(i: int) -> str:
    alphabet = string.ascii_lowercase + string.ascii_uppercase
    if i < len(alphabet):
        return alphabet[i]
    return alphabet[i % len(alphabet)] + str(i // len(alphabet))


def compact_letters(means, significant) -> list[str]:
    """Insert-absorb letter assignment.

    ``significant[i][j]`` is True when groups i and j differ. Groups sharing
    a letter are exactly the non-significant pairs. Letters are ordered so
    the group with the largest mean carries ``a``.
    """
    means = np.asarray(means, dtype=float)
    k = means.size
    sig = np.asarray(significant, dtype=bool)
    columns = [set(range(k))]
    for i in range(k):
        for j in range(i + 1, k):
            if not sig[i, j]:
                continue
            nxt = []
            for col in columns:
                if i in col and j in col:
                    nxt.append(col - {j})
                    nxt.append(col - {i})
                else:
                    nxt.append(col)
            # absorb: drop duplicates and columns contained in another
            uniq = []
            for col in nxt:
                if col not in uniq:
                    uniq.append(col)
            columns = [c for c in uniq if not any(c < o for o in uniq)]
    rank = np.empty(k, dtype=int)
    rank[np.argsort(-means, kind="stable")] = np.arange(k)
    columns.sort(key=lambda c: sorted(rank[g] for g in c))
    out = [""] * k
    for n, col in enumerate(columns):
        for g in col:
            out[g] += _letter(n)
    return out


# --- Tukey HSD ------------------------------------------------------------


@dataclass(frozen=True)
class PairTest:
    i: int
    j: int
    diff: float
    q: float
    p_value: float


@dataclass(frozen=True)
class TukeyResult:
    labels: tuple
    means: tuple
    stds: tuple
    sizes: tuple
    mse: float
    df: int
    alpha: float
    pairs: tuple = field(default=())
    letters: tuple = field(default=())

    def p_matrix(self) -> np.ndarray:
        k = len(self.labels)
        P = np.ones((k, k))
        for t in self.pairs:
            P[t.i, t.j] = P[t.j, t.i] = t.p_value
        return P

    def significant(self, i: int, j: int) -> bool:
        return i != j and self.p_matrix()[i, j] < self.alpha

    def shares_letter(self, i: int, j: int) -> bool:
        return bool(set(self.letters[i]) & set(self.letters[j])) if self.letters[i] and self.letters[j] else False

    def to_table(self) -> str:
        w = max(5, *(len(str(l)) for l in self.labels))
        lines = [f"{'group':<{w}}  {'n':>5}  {'mean':>10}  {'std':>10}  letters"]
        order = np.argsort(-np.asarray(self.means), kind="stable")
        for g in order:
            lines.append(
                f"{str(self.labels[g]):<{w}}  {self.sizes[g]:>5d}  {self.means[g]:>10.4f}  {self.stds[g]:>10.4f}  {self.letters[g]}"
            )
        lines.append(f"MSE within = {self.mse:.6g}, df = {self.df}, alpha = {self.alpha:g}")
        return "\n".join(lines) + "\n"


def tukey_hsd(groups, alpha: float = 0.05) -> TukeyResult:
    """All-pairs Tukey HSD; ``groups`` is a sequence of ``(label, samples)``."""
    groups = [(lab, np.asarray(v, dtype=float).ravel()) for lab, v in groups]
    if len(groups) < 2:
        raise ParameterError("Tukey HSD needs at least 2 groups")
    if any(v.size < 2 for _, v in groups):
        raise ParameterError("every group needs at least 2 observations")
    if not 0 < alpha < 1:
        raise ParameterError("alpha must lie in (0, 1)")
    k = len(groups)
    sizes = np.array([v.size for _, v in groups])
    means = np.array([v.mean() for _, v in groups])
    ss = sum(float(np.sum((v - v.mean()) ** 2)) for _, v in groups)
    df = int(sizes.sum() - k)
    mse = ss / df
    if mse == 0:
        raise DegenerateError("zero within-group variance in every group")

    pairs = []
    sig = np.zeros((k, k), dtype=bool)
    for i in range(k):
        for j in range(i + 1, k):
            d = means[i] - means[j]
            q = abs(d) / math.sqrt(mse / 2 * (1 / sizes[i] + 1 / sizes[j]))
            p = studentized_range_sf(q, k, df)
            pairs.append(PairTest(i, j, float(d), float(q), float(p)))
            sig[i, j] = sig[j, i] = p < alpha
    return TukeyResult(
        labels=tuple(lab for lab, _ in groups),
        means=tuple(float(m) for m in means),
        stds=tuple(float(v.std(ddof=1)) for _, v in groups),
        sizes=tuple(int(n) for n in sizes),
        mse=float(mse),
        df=df,
        alpha=float(alpha),
        pairs=tuple(pairs),
        letters=tuple(compact_letters(means, sig)),
    )
