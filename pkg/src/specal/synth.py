"""Synthetic short-wave NIR reflectance with a known storage-day signal.

Each spectrum is a smooth baseline plus, inside one informative band, a
Gaussian absorption peak whose centre drifts with storage day (933 -> 913
nm over the run), a saturating peak that grows like ``1 - exp(-day/tau)``
and a weak oscillation whose amplitude grows with day. Eggs differ by a
random signal amplitude and an affine (gain/offset) factor; every scan then
gets its own random gain/offset scatter and iid noise.

Outside the band the noiseless spectrum depends on the egg only, and the
design is balanced (each egg once per day), so those wavelengths carry no
correlation with day at all.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .spectra import SpectraSet, WavelengthAxis, load_csv, save_csv

TRUTH_SCHEMA = "specal.synth-truth/1"


@dataclass(frozen=True)
class Peak:
    center_nm: float
    width_nm: float
    amplitude: float
    drift_nm: float = 0.0  # centre shift reached on the last day
    saturating: bool = False  # amplitude scaled by 1 - exp(-day / tau)


DEFAULT_PEAKS = (
    Peak(933.0, 9.0, 0.04, drift_nm=-20.0),
    Peak(895.0, 6.0, 0.03, saturating=True),
)


@dataclass(frozen=True)
class SynthConfig:
    n_eggs: int = 30
    n_days: int = 22
    wl_start: float = 740.0
    wl_stop: float = 1070.0
    wl_step: float = 1.0
    peaks: tuple = DEFAULT_PEAKS
    saturation_days: float = 5.0
    oscillation: float = 0.003  # amplitude on the last day; period 22 nm
    informative_fraction: float = 0.2
    band_center_nm: float = 913.0
    egg_amplitude_sd: float = 0.3
    egg_gain_sd: float = 0.04
    egg_offset_sd: float = 0.01
    scatter: bool = True
    scatter_slope: tuple = (0.9, 1.1)
    scatter_offset: tuple = (-0.02, 0.02)
    noise_sd: float = 0.004
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "peaks", tuple(p if isinstance(p, Peak) else Peak(**p) for p in self.peaks))
        object.__setattr__(self, "scatter_slope", tuple(self.scatter_slope))
        object.__setattr__(self, "scatter_offset", tuple(self.scatter_offset))
        if self.n_eggs < 1 or self.n_days < 2:
            raise ParameterError("need at least 1 egg and 2 days")
        if self.noise_sd < 0 or min(self.egg_amplitude_sd, self.egg_gain_sd, self.egg_offset_sd) < 0:
            raise ParameterError("standard deviations must be non-negative")
        if not 0 < self.informative_fraction <= 1:
            raise ParameterError("informative_fraction must lie in (0, 1]")
        if not (self.wl_step > 0 and self.wl_stop > self.wl_start):
            raise ParameterError("axis must be increasing")
        lo, hi = self.wl_start, self.wl_stop
        for p in self.peaks:
            end = p.center_nm + p.drift_nm
            if not (lo <= p.center_nm <= hi and lo <= end <= hi) or p.width_nm <= 0:
                raise ParameterError(f"peak {p} leaves the axis {lo}..{hi} or has non-positive width")
        if not lo <= self.band_center_nm <= hi:
            raise ParameterError("band centre outside the axis")
        a, b = self.scatter_slope
        if not 0 < a <= b:
            raise ParameterError("scatter slope range must be positive and ordered")
        if self.scatter_offset[0] > self.scatter_offset[1]:
            raise ParameterError("scatter offset range must be ordered")
        if self.seed < 0:
            raise ParameterError("seed must be non-negative")

    @property
    def n_samples(self) -> int:
        return self.n_eggs * self.n_days

    def axis(self) -> WavelengthAxis:
        return WavelengthAxis.regular(self.wl_start, self.wl_stop, self.wl_step)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scatter_slope"] = list(self.scatter_slope)
        d["scatter_offset"] = list(self.scatter_offset)
        return d


@dataclass(frozen=True, eq=False)
class GroundTruth:
    days: np.ndarray
    eggs: np.ndarray
    noiseless: np.ndarray  # before per-scan scatter and noise
    informative: np.ndarray  # sorted wavelength indices carrying day signal
    config: SynthConfig = field(default_factory=SynthConfig)

    @property
    def informative_fraction(self) -> float:
        return self.informative.size / self.noiseless.shape[1]


def _gauss(x, c, w):
    return np.exp(-0.5 * ((x - c) / w) ** 2)


def baseline(wl: np.ndarray) -> np.ndarray:
    span = wl[-1] - wl[0]
    return 0.30 + 0.25 * (wl - wl[0]) / span - 0.10 * _gauss(wl, 970, 30) + 0.05 * _gauss(wl, 800, 40)


def informative_band(cfg: SynthConfig, wl: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Band indices and the smooth taper (sin^2, positive everywhere on the band)."""
    p = wl.size
    L = max(1, int(round(cfg.informative_fraction * p)))
    start = int(np.argmin(np.abs(wl - cfg.band_center_nm))) - L // 2
    start = min(max(start, 0), p - L)
    idx = np.arange(start, start + L)
    mask = np.zeros(p)
    mask[idx] = np.sin(np.linspace(0, np.pi, L + 2)[1:-1]) ** 2
    return idx, mask


def generate(cfg: SynthConfig = SynthConfig()) -> tuple[SpectraSet, GroundTruth]:
    rng = np.random.default_rng(cfg.seed)
    axis = cfg.axis()
    wl = axis.values
    idx, mask = informative_band(cfg, wl)
    base = baseline(wl)
    last = cfg.n_days - 1

    days = np.repeat(np.arange(cfg.n_days), cfg.n_eggs)
    eggs = np.tile(np.arange(cfg.n_eggs), cfg.n_days)
    amp = 1 + cfg.egg_amplitude_sd * rng.standard_normal(cfg.n_eggs)
    gain = 1 + cfg.egg_gain_sd * rng.standard_normal(cfg.n_eggs)
    offset = cfg.egg_offset_sd * rng.standard_normal(cfg.n_eggs)

    frac = days[:, None] / last
    sat = 1 - np.exp(-days[:, None] / cfg.saturation_days)
    sig = cfg.oscillation * frac * np.sin(2 * np.pi * (wl - 860) / 22)
    for pk in cfg.peaks:
        shape = _gauss(wl[None, :], pk.center_nm + pk.drift_nm * frac, pk.width_nm)
        sig = sig + pk.amplitude * amp[eggs][:, None] * (sat if pk.saturating else 1.0) * shape
    clean = gain[eggs][:, None] * (base + mask * sig) + offset[eggs][:, None]

    X = clean
    if cfg.scatter:
        s = rng.uniform(*cfg.scatter_slope, size=days.size)
        o = rng.uniform(*cfg.scatter_offset, size=days.size)
        X = X * s[:, None] + o[:, None]
    if cfg.noise_sd > 0:
        X = X + cfg.noise_sd * rng.standard_normal(X.shape)
    X = np.maximum(X, 1e-4)

    ids = tuple(f"egg{e:02d}_d{d:02d}" for e, d in zip(eggs, days))
    data = SpectraSet(axis, X, days.astype(float), ids)
    truth = GroundTruth(days, eggs, clean, idx, cfg)
    return data, truth


def save_fixture(data: SpectraSet, truth: GroundTruth, directory) -> tuple[Path, Path]:
    """Write ``spectra.csv`` and ``truth.json`` into *directory*."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    csv_path = d / "spectra.csv"
    save_csv(data, csv_path, comment="synthetic NIR reflectance\ntarget: storage days")
    truth_path = d / "truth.json"
    doc = {
        "schema": TRUTH_SCHEMA,
        "sample_ids": list(data.sample_ids),
        "days": [int(v) for v in truth.days],
        "eggs": [int(v) for v in truth.eggs],
        "informative_indices": [int(i) for i in truth.informative],
        "informative_nm": [float(data.axis.values[i]) for i in truth.informative],
        "informative_fraction": truth.informative_fraction,
        "config": truth.config.to_dict(),
    }
    truth_path.write_text(json.dumps(doc, indent=1), encoding="utf-8")
    return csv_path, truth_path


def load_truth(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def load_fixture(directory) -> tuple[SpectraSet, dict]:
    d = Path(directory)
    return load_csv(d / "spectra.csv"), load_truth(d / "truth.json")


def ridge_cv_r2(X, y, alpha: float = 1e-6, n_folds: int = 5, seed: int = 0) -> float:
    """Pooled out-of-fold R² of ridge regression (centred, penalty relative to trace)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    perm = np.random.default_rng(seed).permutation(y.size)
    pred = np.empty_like(y)
    for f in np.array_split(perm, n_folds):
        tr = np.setdiff1d(perm, f)
        mx, my = X[tr].mean(axis=0), y[tr].mean()
        A = X[tr] - mx
        G = A.T @ A
        lam = alpha * np.trace(G) / G.shape[0]
        beta = np.linalg.solve(G + lam * np.eye(G.shape[0]), A.T @ (y[tr] - my))
        pred[f] = (X[f] - mx) @ beta + my
    return 1 - np.sum((y - pred) ** 2) / np.sum((y - y.mean()) ** 2)
