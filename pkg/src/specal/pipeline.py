"""Preprocess -> select wavelengths -> regress, fitted on training rows only.

:class:`FittedPipeline` bundles everything needed to predict from raw
spectra (MSC reference, retained wavelengths, model) and serializes to one
JSON document.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import features, mlp, pls
from . import preprocess as pp
from .errors import DataError, ParameterError, RankExhaustedError, ShapeError
from .spectra import SpectraSet, WavelengthAxis

SCHEMA = "specal.pipeline/1"


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "mlp"
    n_components: int = 10
    architecture: mlp.MlpArchitecture = mlp.MlpArchitecture((10,))
    train: mlp.TrainConfig = mlp.TrainConfig()

    def __post_init__(self):
        if self.kind not in ("pls", "mlp"):
            raise ParameterError(f"model kind must be 'pls' or 'mlp', got {self.kind!r}")
        if self.kind == "pls" and self.n_components < 1:
            raise ParameterError("n_components must be >= 1")

    @classmethod
    def pls(cls, n_components: int = 10) -> "ModelSpec":
        return cls("pls", n_components=n_components)

    @classmethod
    def mlp(cls, hidden=(10,), train: mlp.TrainConfig = mlp.TrainConfig()) -> "ModelSpec":
        arch = hidden if isinstance(hidden, mlp.MlpArchitecture) else mlp.MlpArchitecture(tuple(hidden))
        return cls("mlp", architecture=arch, train=train)

    def label(self) -> str:
        if self.kind == "pls":
            return f"pls:{self.n_components}"
        return f"mlp:{self.architecture.label()}"

    def to_dict(self) -> dict:
        if self.kind == "pls":
            return {"kind": "pls", "n_components": self.n_components}
        return {"kind": "mlp", "hidden": list(self.architecture.hidden), "train": self.train.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        if d["kind"] == "pls":
            return cls.pls(int(d.get("n_components", 10)))
        train = mlp.TrainConfig.from_dict(d["train"]) if "train" in d else mlp.TrainConfig()
        return cls.mlp(tuple(d.get("hidden", (10,))), train)


@dataclass(frozen=True)
class PipelineSpec:
    prep: pp.PreprocessConfig = pp.PreprocessConfig()
    threshold: float = 100.0
    model: ModelSpec = ModelSpec()

    def __post_init__(self):
        object.__setattr__(self, "threshold", float(self.threshold))
        features.n_retained(self.threshold, 1)  # range check

    def label(self) -> str:
        return f"{self.prep.label()} | T={self.threshold:g} | {self.model.label()}"

    def to_dict(self) -> dict:
        return {"prep": self.prep.to_dict(), "threshold": self.threshold, "model": self.model.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineSpec":
        return cls(pp.PreprocessConfig.from_dict(d["prep"]), float(d["threshold"]), ModelSpec.from_dict(d["model"]))


@dataclass(frozen=True, eq=False)
class FittedPipeline:
    spec: PipelineSpec
    input_axis: WavelengthAxis
    selected: np.ndarray  # column indices into the preprocessed axis
    model: object  # PlsModel or MlpModel
    msc_reference: pp.MscReference | None = None

    @property
    def selected_nm(self) -> np.ndarray:
        return pp.output_axis(self.spec.prep, self.input_axis).values[self.selected]

    def features(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.input_axis):
            raise ShapeError(f"pipeline expects {len(self.input_axis)} wavelengths, got shape {X.shape}")
        return pp.transform(self.spec.prep, X, self.input_axis, self.msc_reference)[:, self.selected]

    def predict(self, data) -> np.ndarray:
        if isinstance(data, SpectraSet):
            if data.axis != self.input_axis:
                raise DataError("spectra axis differs from the axis the pipeline was trained on")
            data = data.samples
        return predict_features(self.model, self.features(data))

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "spec": self.spec.to_dict(),
            "input_axis": self.input_axis.values.tolist(),
            "selected": [int(i) for i in self.selected],
            "selected_nm": self.selected_nm.tolist(),
            "msc_reference": None if self.msc_reference is None else self.msc_reference.reference.tolist(),
            "model": self.model.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def model_bytes(self) -> bytes:
        return self.to_json().encode()

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def from_dict(cls, d: dict) -> "FittedPipeline":
        if d.get("schema") != SCHEMA:
            raise DataError(f"unsupported pipeline schema {d.get('schema')!r}")
        spec = PipelineSpec.from_dict(d["spec"])
        model = pls.PlsModel.from_dict(d["model"]) if spec.model.kind == "pls" else mlp.MlpModel.from_dict(d["model"])
        ref = d.get("msc_reference")
        return cls(
            spec=spec,
            input_axis=WavelengthAxis(d["input_axis"]),
            selected=np.asarray(d["selected"], dtype=np.intp),
            model=model,
            msc_reference=None if ref is None else pp.MscReference(ref),
        )

    @classmethod
    def load(cls, path) -> "FittedPipeline":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def predict_features(model, X) -> np.ndarray:
    if isinstance(model, pls.PlsModel):
        return pls.predict_pls(model, X)
    return mlp.predict(model, X)


def fit_model(spec: ModelSpec, X_train, y_train, X_val, y_val, seed: int | None = None):
    """Fit on pre-selected features; PLS ignores the validation rows."""
    if spec.kind == "pls":
        k = min(spec.n_components, X_train.shape[1], X_train.shape[0] - 1)
        try:
            return pls.fit_pls(X_train, y_train, k)
        except RankExhaustedError as exc:
            # keep the components that exist rather than failing the fold
            if exc.n_components_ok < 1:
                raise
            return pls.fit_pls(X_train, y_train, exc.n_components_ok)
    cfg = spec.train if seed is None else replace(spec.train, seed=int(seed))
    return mlp.train(spec.architecture, X_train, y_train, X_val, y_val, cfg)


def fit_selection(spec: PipelineSpec, Xp_train, y_train) -> np.ndarray:
    if spec.threshold >= 100:
        return np.arange(Xp_train.shape[1])
    ranking = features.rank_by_correlation(Xp_train, y_train)
    return features.select_threshold(ranking, spec.threshold).retained


def fit_pipeline(
    spec: PipelineSpec,
    data: SpectraSet,
    train_idx,
    validation_idx,
    seed: int | None = None,
) -> FittedPipeline:
    """Fit every data-dependent step on ``train_idx`` rows only.

    Validation rows drive MLP early stopping and nothing else. Rows outside
    the two index sets are never read.
    """
    train_idx = np.asarray(train_idx, dtype=np.intp)
    validation_idx = np.asarray(validation_idx, dtype=np.intp)
    ref = pp.fit_context(spec.prep, data.samples[train_idx])
    Xt = pp.transform(spec.prep, data.samples[train_idx], data.axis, ref)
    Xv = pp.transform(spec.prep, data.samples[validation_idx], data.axis, ref)
    yt = data.targets[train_idx]
    yv = data.targets[validation_idx]
    cols = fit_selection(spec, Xt, yt)
    model = fit_model(spec.model, Xt[:, cols], yt, Xv[:, cols], yv, seed)
    return FittedPipeline(spec, data.axis, cols, model, ref)
