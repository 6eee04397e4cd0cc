"""Spectral preprocessing: raw, Savitzky-Golay, Beer-Lambert, SNV, MSC, FSD, SSD.

All transforms are row-wise and stateless except MSC, whose reference
spectrum is learned from calibration data and passed explicitly. Transforms
that shorten spectra (Savitzky-Golay, finite differences) also shorten the
wavelength axis so downstream code never sees stale wavelengths.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (
    DegenerateError,
    DomainError,
    FormatError,
    MissingReferenceError,
    NumericalError,
    ParameterError,
    ShapeError,
)
from .spectra import SpectraSet, WavelengthAxis

MAX_WIDTH = 101
MAX_ORDER = 5


class Technique(enum.IntEnum):
    RAW = 1
    SAVGOL = 2
    BEER_LAMBERT = 3
    SNV = 4
    MSC = 5
    FSD = 6
    SSD = 7


_ALIASES = {
    "raw": Technique.RAW,
    "savgol": Technique.SAVGOL,
    "sg": Technique.SAVGOL,
    "bl": Technique.BEER_LAMBERT,
    "beer-lambert": Technique.BEER_LAMBERT,
    "beer_lambert": Technique.BEER_LAMBERT,
    "absorbance": Technique.BEER_LAMBERT,
    "snv": Technique.SNV,
    "msc": Technique.MSC,
    "fsd": Technique.FSD,
    "ssd": Technique.SSD,
}


@dataclass(frozen=True, order=True)
class SavGolParams:
    width: int = 5
    poly: int = 2
    deriv: int = 2

    def __post_init__(self):
        w, p, d = self.width, self.poly, self.deriv
        if not all(isinstance(v, (int, np.integer)) and not isinstance(v, bool) for v in (w, p, d)):
            raise ParameterError(f"Savitzky-Golay parameters must be integers, got {(w, p, d)}")
        if w % 2 == 0 or not 3 <= w <= MAX_WIDTH:
            raise ParameterError(f"width must be odd and within 3..{MAX_WIDTH}, got {w}")
        if not 1 <= d <= p <= MAX_ORDER:
            raise ParameterError(f"need 1 <= deriv <= poly <= {MAX_ORDER}, got poly={p}, deriv={d}")
        if p >= w:
            raise ParameterError(f"poly order {p} must be below width {w}")

    @property
    def half(self) -> int:
        return self.width // 2


@dataclass(frozen=True)
class PreprocessConfig:
    technique: Technique = Technique.RAW
    savgol: SavGolParams | None = None

    def __post_init__(self):
        object.__setattr__(self, "technique", Technique(self.technique))
        if self.technique is Technique.SAVGOL:
            if self.savgol is None:
                object.__setattr__(self, "savgol", SavGolParams())
        elif self.savgol is not None:
            raise ParameterError(f"{self.technique.name} takes no Savitzky-Golay parameters")

    def to_dict(self) -> dict:
        d = {"technique": int(self.technique)}
        if self.savgol is not None:
            d["savgol"] = {"width": self.savgol.width, "poly": self.savgol.poly, "deriv": self.savgol.deriv}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessConfig":
        sg = d.get("savgol")
        return cls(Technique(int(d["technique"])), SavGolParams(int(sg["width"]), int(sg["poly"]), int(sg["deriv"])) if sg else None)

    @classmethod
    def parse(cls, text: str) -> "PreprocessConfig":
        """Parse ``raw``, ``snv``, ``savgol:67,5,3``, ``2`` and similar."""
        name, _, args = text.strip().lower().partition(":")
        try:
            tech = Technique(int(name)) if name.isdigit() else _ALIASES[name]
        except (KeyError, ValueError):
            raise ParameterError(f"unknown preprocessing '{text}'") from None
        if tech is Technique.SAVGOL:
            if args:
                try:
                    w, p, d = (int(v) for v in args.split(","))
                except ValueError:
                    raise ParameterError(f"savgol needs width,poly,deriv, got '{args}'") from None
                return cls(tech, SavGolParams(w, p, d))
            return cls(tech)
        if args:
            raise ParameterError(f"{tech.name} takes no arguments")
        return cls(tech)

    def label(self) -> str:
        if self.technique is Technique.SAVGOL:
            s = self.savgol
            return f"savgol:{s.width},{s.poly},{s.deriv}"
        return self.technique.name.lower().replace("_", "-")


class MscSource(enum.Enum):
    CALIBRATION_MEAN = "calibration_mean"
    EXPLICIT = "explicit"


@dataclass(frozen=True, eq=False)
class MscReference:
    reference: np.ndarray
    source: MscSource = MscSource.EXPLICIT

    def __post_init__(self):
        r = np.array(self.reference, dtype=float, copy=True)
        if r.ndim != 1 or r.size == 0 or not np.all(np.isfinite(r)):
            raise ParameterError("MSC reference must be a finite, non-empty vector")
        r.setflags(write=False)
        object.__setattr__(self, "reference", r)


# --- Savitzky-Golay -------------------------------------------------------


def savgol_coefficients(params: SavGolParams) -> np.ndarray:
    """Weights ``c`` so that ``c @ window`` is the d-th derivative at the centre.

    Built from the pseudo-inverse of the window Vandermonde matrix on a
    rescaled abscissa ``u = t / h`` for conditioning, then mapped back to
    unit spacing by ``d! / h**d``.
    """
    h = params.half
    u = np.arange(-h, h + 1, dtype=float) / h
    A = np.vander(u, params.poly + 1, increasing=True)
    Q, R = np.linalg.qr(A)
    # row d of pinv(A) = e_d^T R^-1 Q^T
    e = np.zeros(params.poly + 1)
    e[params.deriv] = 1.0
    row = np.linalg.solve(R.T, e) @ Q.T
    return row * (math.factorial(params.deriv) / h ** params.deriv)


def savitzky_golay(x, params: SavGolParams) -> np.ndarray:
    """Valid-mode filter: output length ``m - w + 1``, no edge extrapolation."""
    x = np.asarray(x, dtype=float)
    one_d = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] < params.width:
        raise ShapeError(f"spectrum of length {X.shape[1]} is shorter than window {params.width}")
    out = kernels.savgol_valid(np.ascontiguousarray(X), savgol_coefficients(params))
    return out[0] if one_d else out


# --- Simple transforms ----------------------------------------------------


def beer_lambert(x, axis: WavelengthAxis | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    bad = np.argwhere(x <= 0)
    if bad.size:
        j = bad[0][-1]
        where = f"{axis.values[j]:g} nm" if axis is not None else f"index {j}"
        raise DomainError(f"reflectance must be > 0 for absorbance; got {x[tuple(bad[0])]!r} at {where}")
    return -np.log10(x)


def snv(x) -> np.ndarray:
    """Centre each spectrum and divide by its sample standard deviation."""
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(x)
    if X.shape[1] < 2:
        raise ShapeError("SNV needs at least 2 points per spectrum")
    mu = X.mean(axis=1, keepdims=True)
    s = X.std(axis=1, ddof=1, keepdims=True)
    zero = np.flatnonzero(s[:, 0] == 0)
    if zero.size:
        raise DegenerateError(f"constant spectrum (zero standard deviation) at row {zero[0]}")
    out = (X - mu) / s
    return out[0] if x.ndim == 1 else out


def msc_fit(calibration) -> MscReference:
    """Reference spectrum = column mean of the calibration spectra."""
    X = calibration.samples if isinstance(calibration, SpectraSet) else np.asarray(calibration, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ParameterError("MSC reference needs at least 2 calibration spectra")
    return MscReference(X.mean(axis=0), MscSource.CALIBRATION_MEAN)


def msc_coefficients(x, ref: MscReference) -> tuple[np.ndarray, np.ndarray]:
    """Per-spectrum OLS intercept and slope of ``x`` regressed on the reference."""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    r = ref.reference
    if X.shape[1] != r.size:
        raise ShapeError(f"spectrum length {X.shape[1]} does not match reference length {r.size}")
    rc = r - r.mean()
    ss = rc @ rc
    if ss == 0:
        raise NumericalError("MSC reference has zero variance; correction is not invertible")
    slope = (X - X.mean(axis=1, keepdims=True)) @ rc / ss
    intercept = X.mean(axis=1) - slope * r.mean()
    return intercept, slope


def msc_correct(x, ref: MscReference) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    b0, b1 = msc_coefficients(x, ref)
    tiny = np.flatnonzero(np.abs(b1) < 1e-12)
    if tiny.size:
        raise NumericalError(f"MSC slope ~0 at row {tiny[0]}; correction is not invertible")
    out = (np.atleast_2d(x) - b0[:, None]) / b1[:, None]
    return out[0] if x.ndim == 1 else out


def fsd(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < 2:
        raise ShapeError("first difference needs at least 2 points")
    return x[..., 1:] - x[..., :-1]


def ssd(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < 3:
        raise ShapeError("second difference needs at least 3 points")
    return fsd(fsd(x))


# --- Dispatch -------------------------------------------------------------


def output_axis(cfg: PreprocessConfig, axis: WavelengthAxis) -> WavelengthAxis:
    v = axis.values
    t = cfg.technique
    if t is Technique.SAVGOL:
        h = cfg.savgol.half
        return WavelengthAxis(v[h: v.size - h])
    if t is Technique.FSD:
        return WavelengthAxis(v[1:])
    if t is Technique.SSD:
        return WavelengthAxis(v[2:])
    return axis


def fit_context(cfg: PreprocessConfig, calibration) -> MscReference | None:
    """Statistics a technique needs from calibration data (MSC only)."""
    if cfg.technique is Technique.MSC:
        return msc_fit(calibration)
    return None


def transform(cfg: PreprocessConfig, X: np.ndarray, axis: WavelengthAxis, ref: MscReference | None = None) -> np.ndarray:
    """Matrix-level dispatch used by :func:`apply` and the CV engine."""
    t = cfg.technique
    if t is Technique.RAW:
        return np.asarray(X, dtype=float)
    if t is Technique.SAVGOL:
        if not axis.is_uniform():
            raise FormatError("Savitzky-Golay requires a uniformly spaced wavelength axis")
        return savitzky_golay(X, cfg.savgol)
    if t is Technique.BEER_LAMBERT:
        return beer_lambert(X, axis)
    if t is Technique.SNV:
        return snv(X)
    if t is Technique.MSC:
        if ref is None:
            raise MissingReferenceError("MSC needs a reference fitted on calibration data")
        return msc_correct(X, ref)
    if t is Technique.FSD:
        return fsd(X)
    if t is Technique.SSD:
        return ssd(X)
    raise ParameterError(f"unhandled technique {t!r}")  # pragma: no cover


def apply(cfg: PreprocessConfig, x: SpectraSet, fit_context: MscReference | None = None) -> SpectraSet:
    if x.n_samples == 0:
        raise ParameterError("cannot preprocess an empty set")
    out = transform(cfg, x.samples, x.axis, fit_context)
    return x.with_samples(out, output_axis(cfg, x.axis))
