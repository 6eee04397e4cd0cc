"""Multilayer perceptron regressor: sigmoid hidden layers, linear output.

Inputs and targets are standardized with training-set statistics stored in
the model, so all weights live in scaled space. Training is full-batch
gradient descent with geometric learning-rate decay and early stopping on
validation RMSE (the best-validation snapshot is returned, not the last).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _pykernels, kernels
from .errors import DataError, ParameterError, ShapeError

SCHEMA = "specal.mlp/1"
MAX_NEURONS = 200


@dataclass(frozen=True, order=True)
class MlpArchitecture:
    """Hidden layer sizes; an empty tuple is a purely linear model."""

    hidden: tuple = ()

    def __post_init__(self):
        h = tuple(int(v) for v in self.hidden)
        if len(h) > 2:
            raise ParameterError(f"at most 2 hidden layers, got {len(h)}")
        if any(not 1 <= v <= MAX_NEURONS for v in h):
            raise ParameterError(f"hidden sizes must lie in 1..{MAX_NEURONS}, got {list(h)}")
        object.__setattr__(self, "hidden", h)

    @classmethod
    def from_grid(cls, first: int, second: int = 0) -> "MlpArchitecture":
        """Grid encoding where a size of 0 means the layer is absent."""
        return cls(tuple(v for v in (first, second) if v))

    @classmethod
    def parse(cls, text: str) -> "MlpArchitecture":
        text = text.strip()
        if text in ("", "linear", "[]"):
            return cls(())
        try:
            return cls.from_grid(*(int(v) for v in text.strip("[]").split(",")))
        except (TypeError, ValueError):
            raise ParameterError(f"cannot parse architecture '{text}'") from None

    def complexity(self) -> tuple:
        """Sort key: total neurons, then depth, then the sizes themselves."""
        return (sum(self.hidden), len(self.hidden), self.hidden)

    def label(self) -> str:
        return ",".join(str(v) for v in self.hidden) or "linear"

    def layer_sizes(self, n_features: int) -> list[int]:
        return [n_features, *self.hidden, 1]


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 5000
    learning_rate: float = 0.05
    decay: float = 0.999
    patience: int = 200
    seed: int = 0
    l2: float = 1e-6
    batch: str = "full"

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ParameterError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ParameterError("patience must be >= 1")
        if not self.learning_rate > 0:
            raise ParameterError("learning_rate must be > 0")
        if not 0 < self.decay <= 1:
            raise ParameterError("decay must lie in (0, 1]")
        if self.l2 < 0:
            raise ParameterError("l2 must be >= 0")
        if self.batch != "full":
            raise ParameterError("only full-batch training is supported")

    def to_dict(self) -> dict:
        return {
            "max_epochs": self.max_epochs,
            "learning_rate": self.learning_rate,
            "decay": self.decay,
            "patience": self.patience,
            "seed": self.seed,
            "l2": self.l2,
            "batch": self.batch,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


# Budget used by the desk-scale tuning runs; see README for the rationale.
DESK_TRAIN = TrainConfig(max_epochs=1000, learning_rate=0.2, decay=0.999, patience=100, l2=1e-6)


@dataclass(frozen=True, eq=False)
class MlpModel:
    architecture: MlpArchitecture
    weights: tuple
    biases: tuple
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float
    history_train: np.ndarray = field(default_factory=lambda: np.empty(0))
    history_validation: np.ndarray = field(default_factory=lambda: np.empty(0))
    seed: int = 0
    best_epoch: int = -1

    def __post_init__(self):
        for name in ("x_mean", "x_std", "history_train", "history_validation"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        for name in ("weights", "biases"):
            arrs = []
            for a in getattr(self, name):
                a = np.array(a, dtype=float)
                a.setflags(write=False)
                arrs.append(a)
            object.__setattr__(self, name, tuple(arrs))
        sizes = self.architecture.layer_sizes(self.x_mean.size)
        if len(self.weights) != len(sizes) - 1:
            raise ShapeError("weight list does not match architecture")
        for W, b, fi, fo in zip(self.weights, self.biases, sizes[:-1], sizes[1:]):
            if W.shape != (fi, fo) or b.shape != (fo,):
                raise ShapeError(f"layer shape {W.shape}/{b.shape} does not chain as ({fi}, {fo})")
        if np.any(self.x_std <= 0) or not self.y_std > 0:
            raise ParameterError("scaler standard deviations must be positive")

    @property
    def n_features(self) -> int:
        return self.x_mean.size

    @property
    def epochs_run(self) -> int:
        return self.history_train.size

    def scale_x(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.x_mean) / self.x_std

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "architecture": list(self.architecture.hidden),
            "input_scaler": {"mean": self.x_mean.tolist(), "std": self.x_std.tolist()},
            "output_scaler": {"mean": self.y_mean, "std": self.y_std},
            "layers": [
                {"shape": list(W.shape), "weights": W.ravel().tolist(), "bias": b.tolist()}
                for W, b in zip(self.weights, self.biases)
            ],
            "training": {
                "seed": self.seed,
                "epochs_run": self.epochs_run,
                "best_epoch": self.best_epoch,
                "train_rmse": self.history_train.tolist(),
                "validation_rmse": self.history_validation.tolist(),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def model_bytes(self) -> bytes:
        return self.to_json().encode()

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        if d.get("schema") != SCHEMA:
            raise DataError(f"unsupported model schema {d.get('schema')!r}")
        tr = d["training"]
        return cls(
            architecture=MlpArchitecture(tuple(d["architecture"])),
            weights=tuple(np.array(L["weights"], dtype=float).reshape(L["shape"]) for L in d["layers"]),
            biases=tuple(np.array(L["bias"], dtype=float) for L in d["layers"]),
            x_mean=d["input_scaler"]["mean"],
            x_std=d["input_scaler"]["std"],
            y_mean=float(d["output_scaler"]["mean"]),
            y_std=float(d["output_scaler"]["std"]),
            history_train=tr["train_rmse"],
            history_validation=tr["validation_rmse"],
            seed=int(tr["seed"]),
            best_epoch=int(tr["best_epoch"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "MlpModel":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "MlpModel":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _check_features(m: MlpModel, X: np.ndarray) -> None:
    if X.shape[-1] != m.n_features:
        raise ShapeError(f"model expects {m.n_features} features, got {X.shape[-1]}")


def predict(m: MlpModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ShapeError(f"predict expects a 2-D matrix, got shape {X.shape}")
    _check_features(m, X)
    out = _pykernels.forward_pass(m.weights, m.biases, m.scale_x(X))[-1][:, 0]
    return out * m.y_std + m.y_mean


def forward(m: MlpModel, x) -> float:
    """Prediction for a single feature vector, in target units."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ShapeError(f"forward expects a vector, got shape {x.shape}")
    return float(predict(m, x[None, :])[0])


def loss(m: MlpModel, X, y, l2: float = 0.0) -> float:
    """Scaled-space MSE plus ``l2 * sum ||W||^2``."""
    X = np.asarray(X, dtype=float)
    _check_features(m, X)
    t = (np.asarray(y, dtype=float) - m.y_mean) / m.y_std
    value, _, _, _ = _pykernels.backprop(m.weights, m.biases, m.scale_x(X), t, l2)
    return value


def gradient(m: MlpModel, X, y, l2: float = 0.0) -> tuple[list, list]:
    """Exact gradient of :func:`loss` w.r.t. (weights, biases)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ShapeError(f"incompatible batch shapes {X.shape} and {y.shape}")
    _check_features(m, X)
    t = (y - m.y_mean) / m.y_std
    _, _, gW, gb = _pykernels.backprop(m.weights, m.biases, m.scale_x(X), t, l2)
    return gW, gb


def init_weights(sizes: list[int], rng: np.random.Generator) -> tuple[list, list]:
    """Glorot-uniform weights, zero biases."""
    W, b = [], []
    for fi, fo in zip(sizes[:-1], sizes[1:]):
        s = np.sqrt(6.0 / (fi + fo))
        W.append(rng.uniform(-s, s, size=(fi, fo)))
        b.append(np.zeros(fo))
    return W, b


def train(arch: MlpArchitecture, X_train, y_train, X_val, y_val, cfg: TrainConfig = TrainConfig()) -> MlpModel:
    X_train = np.asarray(X_train, dtype=float)
    X_val = np.asarray(X_val, dtype=float)
    y_train = np.asarray(y_train, dtype=float)
    y_val = np.asarray(y_val, dtype=float)
    if X_train.shape[0] == 0 or X_val.shape[0] == 0:
        raise DataError("training and validation sets must be non-empty")
    if X_train.ndim != 2 or X_val.ndim != 2 or X_train.shape[1] != X_val.shape[1]:
        raise ShapeError(f"feature counts differ: {X_train.shape} vs {X_val.shape}")
    if y_train.shape != (X_train.shape[0],) or y_val.shape != (X_val.shape[0],):
        raise ShapeError("target vectors must match row counts")

    x_mean = X_train.mean(axis=0)
    x_std = X_train.std(axis=0)
    dead = x_std == 0
    x_std[dead] = 1.0
    y_mean = float(y_train.mean())
    y_std = float(y_train.std()) or 1.0

    sizes = arch.layer_sizes(X_train.shape[1])
    W, b = init_weights(sizes, np.random.default_rng(cfg.seed))
    W[0][dead, :] = 0.0

    Xs = (X_train - x_mean) / x_std
    Xv = (X_val - x_mean) / x_std
    t = (y_train - y_mean) / y_std
    tv = (y_val - y_mean) / y_std
    bW, bb, ht, hv, best = kernels.train_full_batch(
        Xs, t, Xv, tv, W, b, cfg.learning_rate, cfg.decay, cfg.max_epochs, cfg.patience, cfg.l2
    )
    return MlpModel(
        architecture=arch,
        weights=tuple(bW),
        biases=tuple(bb),
        x_mean=x_mean,
        x_std=x_std,
        y_mean=y_mean,
        y_std=y_std,
        history_train=ht * y_std,
        history_validation=hv * y_std,
        seed=cfg.seed,
        best_epoch=int(best),
    )


def with_params(m: MlpModel, weights, biases) -> MlpModel:
    """Copy of *m* with replaced parameters (used by gradient checks)."""
    return replace(m, weights=tuple(weights), biases=tuple(biases))
