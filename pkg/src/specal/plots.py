"""Minimal deterministic SVG charts (no timestamps, fixed number formatting).

Covers the report figures: spectra overlays, R² against threshold,
actual-vs-predicted scatter and an absolute-error histogram.
"""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

W, H = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 55
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f")


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 12))
        v += step
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Frame:
    def __init__(self, xlim, ylim, title, xlabel, ylabel):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 == self.x0:
            self.x0, self.x1 = self.x0 - 1, self.x1 + 1
        if self.y1 == self.y0:
            self.y0, self.y1 = self.y0 - 1, self.y1 + 1
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
            f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
            f'<text x="{W / 2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{escape(title)}</text>',
        ]
        self._axes(xlabel, ylabel)

    def sx(self, x):
        return LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)

    def sy(self, y):
        return H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)

    def _axes(self, xlabel, ylabel):
        p = self.parts
        p.append(f'<rect x="{LEFT}" y="{TOP}" width="{W - LEFT - RIGHT}" height="{H - TOP - BOTTOM}" fill="none" stroke="black"/>')
        for t in _nice_ticks(self.x0, self.x1):
            x = _fmt(self.sx(t))
            p.append(f'<line x1="{x}" y1="{H - BOTTOM}" x2="{x}" y2="{H - BOTTOM + 5}" stroke="black"/>')
            p.append(f'<text x="{x}" y="{H - BOTTOM + 18}" text-anchor="middle" font-family="sans-serif" font-size="11">{t:g}</text>')
        for t in _nice_ticks(self.y0, self.y1):
            y = _fmt(self.sy(t))
            p.append(f'<line x1="{LEFT - 5}" y1="{y}" x2="{LEFT}" y2="{y}" stroke="black"/>')
            p.append(f'<text x="{LEFT - 8}" y="{y}" text-anchor="end" dominant-baseline="middle" font-family="sans-serif" font-size="11">{t:g}</text>')
        p.append(f'<text x="{(LEFT + W - RIGHT) / 2}" y="{H - 12}" text-anchor="middle" font-family="sans-serif" font-size="12">{escape(xlabel)}</text>')
        p.append(
            f'<text x="16" y="{(TOP + H - BOTTOM) / 2}" text-anchor="middle" font-family="sans-serif" font-size="12" '
            f'transform="rotate(-90 16 {(TOP + H - BOTTOM) / 2})">{escape(ylabel)}</text>'
        )

    def polyline(self, xs, ys, color, width=1.0, opacity=1.0):
        pts = " ".join(f"{_fmt(self.sx(x))},{_fmt(self.sy(y))}" for x, y in zip(xs, ys) if math.isfinite(y))
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}" stroke-opacity="{opacity}"/>')

    def circles(self, xs, ys, color, r=2.5):
        for x, y in zip(xs, ys):
            self.parts.append(f'<circle cx="{_fmt(self.sx(x))}" cy="{_fmt(self.sy(y))}" r="{r}" fill="{color}" fill-opacity="0.6"/>')

    def rect(self, x0, x1, y0, y1, color):
        a, b = self.sx(x0), self.sx(x1)
        top, bot = self.sy(y1), self.sy(y0)
        self.parts.append(f'<rect x="{_fmt(a)}" y="{_fmt(top)}" width="{_fmt(b - a)}" height="{_fmt(bot - top)}" fill="{color}" stroke="white"/>')

    def legend(self, labels):
        for i, lab in enumerate(labels):
            y = TOP + 14 + 16 * i
            c = PALETTE[i % len(PALETTE)]
            self.parts.append(f'<line x1="{W - RIGHT - 150}" y1="{y}" x2="{W - RIGHT - 130}" y2="{y}" stroke="{c}" stroke-width="2"/>')
            self.parts.append(f'<text x="{W - RIGHT - 125}" y="{y + 4}" font-family="sans-serif" font-size="11">{escape(lab)}</text>')

    def svg(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _lim(v, pad=0.04):
    v = np.asarray(v, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return (0.0, 1.0)
    lo, hi = float(v.min()), float(v.max())
    d = (hi - lo) * pad or 1.0
    return lo - d, hi + d


def spectra_overlay(wavelengths, X, title="Spectra", ylabel="value", max_lines: int = 60, labels=None) -> str:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    rows = np.linspace(0, X.shape[0] - 1, min(max_lines, X.shape[0])).round().astype(int)
    fr = _Frame(_lim(wavelengths, 0), _lim(X[rows]), title, "wavelength (nm)", ylabel)
    for k, i in enumerate(rows):
        color = PALETTE[k % len(PALETTE)] if labels is not None else "#1f77b4"
        fr.polyline(wavelengths, X[i], color, 0.8, 0.5)
    if labels is not None:
        fr.legend([labels[i] for i in rows][: len(PALETTE)])
    return fr.svg()


def r2_vs_threshold(series: dict, title="Validation R² vs feature threshold") -> str:
    """``series`` maps a label to ``(thresholds, mean_r2)``."""
    allx = np.concatenate([np.asarray(x, float) for x, _ in series.values()])
    ally = np.concatenate([np.asarray(y, float) for _, y in series.values()])
    fr = _Frame(_lim(allx, 0.02), _lim(ally), title, "threshold (%)", "mean validation R²")
    for i, (lab, (x, y)) in enumerate(series.items()):
        order = np.argsort(x)
        fr.polyline(np.asarray(x)[order], np.asarray(y)[order], PALETTE[i % len(PALETTE)], 1.8)
    fr.legend(list(series))
    return fr.svg()


def actual_vs_predicted(y, yhat, title="Actual vs predicted") -> str:
    y = np.asarray(y, float)
    yhat = np.asarray(yhat, float)
    lim = _lim(np.concatenate([y, yhat]))
    fr = _Frame(lim, lim, title, "actual", "predicted")
    fr.polyline(lim, lim, "#7f7f7f", 1.0)
    fr.circles(y, yhat, PALETTE[0])
    return fr.svg()


def error_histogram(errors, bins: int = 20, title="Absolute error") -> str:
    e = np.abs(np.asarray(errors, float))
    counts, edges = np.histogram(e, bins=bins)
    fr = _Frame((float(edges[0]), float(edges[-1])), (0.0, float(counts.max()) * 1.05 or 1.0), title, "absolute error", "count")
    for c, a, b in zip(counts, edges[:-1], edges[1:]):
        if c:
            fr.rect(a, b, 0.0, float(c), PALETTE[0])
    return fr.svg()


def write(svg: str, path) -> None:
    Path(path).write_text(svg, encoding="utf-8")
