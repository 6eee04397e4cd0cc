"""Single-response partial least squares (PLS1) fitted by NIPALS.

X is column-centred (optionally autoscaled), y centred. Each component takes
``w = X'y / |X'y|``, scores ``t = Xw``, loadings ``p = X't / t't`` and
``q = y't / t't``, then deflates both blocks. The regression vector is
``b = W (P'W)^-1 q`` so prediction is a single affine map.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, ParameterError, RankExhaustedError, ShapeError

SCHEMA = "specal.pls/1"

# A component is rejected when |X'y| falls below this fraction of its value
# at the first component (or below an absolute floor when that is zero).
RELATIVE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class PlsModel:
    n_components: int
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    weights: np.ndarray  # W [p x k]
    loadings: np.ndarray  # P [p x k]
    q: np.ndarray  # [k]
    coef: np.ndarray  # b [p], in units of the raw (unscaled) inputs
    scores: np.ndarray | None = None  # T [n x k] of the training data

    def __post_init__(self):
        for name in ("x_mean", "x_scale", "weights", "loadings", "q", "coef", "scores"):
            v = getattr(self, name)
            if v is None:
                continue
            a = np.array(v, dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n_features(self) -> int:
        return self.x_mean.size

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "n_components": self.n_components,
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "y_mean": self.y_mean,
            "weights": self.weights.tolist(),
            "loadings": self.loadings.tolist(),
            "q": self.q.tolist(),
            "coef": self.coef.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def model_bytes(self) -> bytes:
        return self.to_json().encode()

    @classmethod
    def from_dict(cls, d: dict) -> "PlsModel":
        if d.get("schema") != SCHEMA:
            raise DataError(f"unsupported model schema {d.get('schema')!r}")
        k = int(d["n_components"])
        return cls(
            n_components=k,
            x_mean=d["x_mean"],
            x_scale=d["x_scale"],
            y_mean=float(d["y_mean"]),
            weights=np.array(d["weights"], dtype=float).reshape(-1, k),
            loadings=np.array(d["loadings"], dtype=float).reshape(-1, k),
            q=d["q"],
            coef=d["coef"],
        )

    @classmethod
    def from_json(cls, text: str) -> "PlsModel":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "PlsModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def fit_pls(X, y, n_components: int, scale: bool = False) -> PlsModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ShapeError(f"incompatible shapes {X.shape} and {y.shape}")
    n, p = X.shape
    k = int(n_components)
    if n < 2:
        raise ParameterError("PLS needs at least 2 samples")
    if not 1 <= k <= min(n - 1, p):
        raise ParameterError(f"n_components must lie in 1..{min(n - 1, p)}, got {n_components}")

    x_mean = X.mean(axis=0)
    x_scale = np.ones(p)
    if scale:
        s = X.std(axis=0, ddof=1)
        x_scale = np.where(s > 0, s, 1.0)
    y_mean = float(y.mean())
    E = (X - x_mean) / x_scale
    f = y - y_mean

    W = np.zeros((p, k))
    P = np.zeros((p, k))
    T = np.zeros((n, k))
    q = np.zeros(k)
    ref = None
    for a in range(k):
        w = E.T @ f
        norm = np.linalg.norm(w)
        if ref is None:
            ref = norm
        if norm < 1e-300 or norm < RELATIVE_TOL * ref:
            raise RankExhaustedError(
                f"X'y vanished at component {a + 1}; only {a} component(s) could be extracted",
                n_components_ok=a,
            )
        w /= norm
        t = E @ w
        tt = t @ t
        P[:, a] = E.T @ t / tt
        q[a] = f @ t / tt
        E = E - np.outer(t, P[:, a])
        f = f - q[a] * t
        W[:, a] = w
        T[:, a] = t

    try:
        b = W @ np.linalg.solve(P.T @ W, q)
    except np.linalg.LinAlgError:
        raise RankExhaustedError("P'W is singular", n_components_ok=0) from None
    return PlsModel(k, x_mean, x_scale, y_mean, W, P, q, b / x_scale, T)


def predict_pls(m: PlsModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != m.n_features:
        raise ShapeError(f"model expects {m.n_features} columns, got shape {X.shape}")
    return (X - m.x_mean) @ m.coef + m.y_mean
