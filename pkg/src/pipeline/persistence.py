"""
Versioned JSON model files.

Document layout (schema_version 1):

    {
      "schema_version": 1,
      "name": "aggregated" | "gbm_smote" | "gbm" | "rf" | "logreg",
      "feature_names": [...],
      "centroid_columns": [...],          # empty unless a GP stage is present
      "model": {"type": "gbm" | "forest" | "logistic", ...},
      "gp": null | {"kernel": {...}, "train_inputs": [...], "alpha": [...], ...}
    }

Floats are written with repr precision so a reloaded model reproduces the
saved predictions exactly.
"""

import json
import logging
from dataclasses import dataclass, field
from os import PathLike
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd
from scipy.linalg import cholesky

from src.learners.boosting import GBMModel
from src.learners.forest import ForestModel
from src.learners.gaussian_process import GPModel, RBFKernel, gp_predict, rbf_matrix
from src.learners.logistic import LinearModel
from src.learners.tree import DecisionTree

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

Model = Union[GBMModel, ForestModel, LinearModel]


class ModelFileError(ValueError):
    """Unreadable or malformed model file."""

    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        super().__init__(message if offset is None else f"{message} at byte {offset}")


class ModelVersionError(ValueError):
    def __init__(self, found: Any, expected: int = SCHEMA_VERSION):
        self.found = found
        self.expected = expected
        super().__init__(f"unsupported model schema version {found!r} (this build reads version {expected})")


@dataclass
class ModelBundle:
    """A deliverable model plus the columns it reads."""
    name: str
    model: Model
    feature_names: List[str]
    gp: Optional[GPModel] = None
    centroid_columns: List[str] = field(default_factory=list)

    def required_columns(self) -> List[str]:
        return [*self.feature_names, *self.centroid_columns]

    def missing_columns(self, frame: pd.DataFrame) -> List[str]:
        return [c for c in self.required_columns() if c not in frame.columns]

    def predict(self, frame: pd.DataFrame) -> np.ndarray:
        missing = self.missing_columns(frame)
        if missing:
            raise ValueError(f"missing column {missing[0]!r}")
        scores = self.model.predict(frame[self.feature_names].to_numpy(dtype=float))
        if self.gp is not None:
            scores = scores + gp_predict(self.gp, frame[self.centroid_columns].to_numpy(dtype=float))
        return scores


def _model_to_dict(model: Model) -> Dict[str, Any]:
    if isinstance(model, GBMModel):
        return {
            "type": "gbm",
            "loss": model.loss,
            "learning_rate": model.learning_rate,
            "init_value": model.init_value,
            "n_features": model.n_features,
            "trees": [t.to_dict() for t in model.trees],
        }
    if isinstance(model, ForestModel):
        return {
            "type": "forest",
            "tree_seeds": model.tree_seeds,
            "features_per_split": model.features_per_split,
            "n_features": model.n_features,
            "bootstrap": model.bootstrap,
            "trees": [t.to_dict() for t in model.trees],
        }
    if isinstance(model, LinearModel):
        return {
            "type": "logistic",
            "weights": model.weights.tolist(),
            "intercept": model.intercept,
            "theta": model.theta.tolist(),
            "feature_mean": model.feature_mean.tolist(),
            "feature_scale": model.feature_scale.tolist(),
            "l2": model.l2,
            "converged": model.converged,
            "n_iter": model.n_iter,
            "grad_norm": model.grad_norm,
        }
    raise TypeError(f"cannot serialise model of type {type(model).__name__}")


def _model_from_dict(data: Dict[str, Any], feature_names: List[str]) -> Model:
    kind = data["type"]
    if kind == "gbm":
        return GBMModel(
            trees=[DecisionTree.from_dict(t) for t in data["trees"]],
            learning_rate=float(data["learning_rate"]),
            init_value=float(data["init_value"]),
            loss=data["loss"],
            n_features=int(data["n_features"]),
            feature_names=feature_names,
        )
    if kind == "forest":
        return ForestModel(
            trees=[DecisionTree.from_dict(t) for t in data["trees"]],
            tree_seeds=[int(s) for s in data["tree_seeds"]],
            features_per_split=int(data["features_per_split"]),
            n_features=int(data["n_features"]),
            bootstrap=bool(data["bootstrap"]),
            feature_names=feature_names,
        )
    if kind == "logistic":
        return LinearModel(
            weights=np.array(data["weights"], dtype=float),
            intercept=float(data["intercept"]),
            theta=np.array(data["theta"], dtype=float),
            feature_mean=np.array(data["feature_mean"], dtype=float),
            feature_scale=np.array(data["feature_scale"], dtype=float),
            l2=float(data["l2"]),
            converged=bool(data["converged"]),
            n_iter=int(data["n_iter"]),
            grad_norm=float(data["grad_norm"]),
            feature_names=feature_names,
        )
    raise ModelFileError(f"unknown model type {kind!r}")


def _gp_to_dict(gp: GPModel) -> Dict[str, Any]:
    return {
        "kernel": {"variance": gp.kernel.variance, "lengthscale": gp.kernel.lengthscale, "noise": gp.kernel.noise},
        "train_inputs": gp.train_inputs.tolist(),
        "alpha": gp.alpha.tolist(),
        "input_mean": gp.input_mean.tolist(),
        "input_scale": gp.input_scale.tolist(),
        "y_mean": gp.y_mean,
        "noise_used": gp.noise_used,
        "log_marginal_likelihood": gp.log_marginal_likelihood,
    }


def _gp_from_dict(data: Dict[str, Any]) -> GPModel:
    kernel = RBFKernel(**data["kernel"])
    train_inputs = np.array(data["train_inputs"], dtype=float).reshape(-1, 2)
    input_scale = np.array(data["input_scale"], dtype=float)
    noise_used = float(data["noise_used"])
    # the factor is not stored; it is only needed for variances
    K = rbf_matrix(train_inputs, train_inputs, kernel.variance, kernel.lengthscale / float(input_scale[0]))
    chol = cholesky(K + noise_used * np.eye(len(K)), lower=True)
    return GPModel(
        train_inputs=train_inputs,
        alpha=np.array(data["alpha"], dtype=float),
        chol=chol,
        kernel=kernel,
        input_mean=np.array(data["input_mean"], dtype=float),
        input_scale=input_scale,
        y_mean=float(data["y_mean"]),
        noise_used=noise_used,
        log_marginal_likelihood=float(data["log_marginal_likelihood"]),
    )


def bundle_to_dict(bundle: ModelBundle) -> Dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "name": bundle.name,
        "feature_names": list(bundle.feature_names),
        "centroid_columns": list(bundle.centroid_columns),
        "model": _model_to_dict(bundle.model),
        "gp": _gp_to_dict(bundle.gp) if bundle.gp is not None else None,
    }


def save_model(fit, path: Union[str, PathLike]) -> None:
    """
    Write a model file.

    Args:
        fit: ModelBundle, or any fit result exposing `bundle()`
        path: Target file
    """
    bundle = fit if isinstance(fit, ModelBundle) else fit.bundle()
    with open(path, "w", encoding="utf-8") as file:
        json.dump(bundle_to_dict(bundle), file, allow_nan=False)
        file.write("\n")
    logger.info(f"Saved model '{bundle.name}' to {path}")


def load_model(path: Union[str, PathLike]) -> ModelBundle:
    """
    Read a model file written by `save_model`.

    Raises:
        ModelFileError: unreadable JSON (with byte offset) or missing fields
        ModelVersionError: schema version other than SCHEMA_VERSION
    """
    with open(path, "rb") as file:
        raw = file.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise ModelFileError("model file is not valid UTF-8", offset=e.start)
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFileError(f"invalid model JSON: {e.msg}", offset=len(text[:e.pos].encode("utf-8")))

    if not isinstance(document, dict):
        raise ModelFileError("model file must hold a JSON object")
    version = document.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ModelVersionError(version)

    try:
        feature_names = list(document["feature_names"])
        bundle = ModelBundle(
            name=document["name"],
            model=_model_from_dict(document["model"], feature_names),
            feature_names=feature_names,
            gp=_gp_from_dict(document["gp"]) if document.get("gp") else None,
            centroid_columns=list(document.get("centroid_columns", [])),
        )
    except KeyError as e:
        raise ModelFileError(f"model file is missing field {e.args[0]!r}")
    logger.info(f"Loaded model '{bundle.name}' from {path}")
    return bundle
