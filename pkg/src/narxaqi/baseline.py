"""Ordinary least-squares linear regression baseline."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .dataset import SupervisedFrame
from .errors import ConfigurationError, InsufficientDataError
from .util import atomic_write_text


class RankDeficientWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    intercept: float
    feature_names: tuple[str, ...] = ()
    target_name: str = "y"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if not (np.all(np.isfinite(w)) and np.isfinite(self.intercept)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "weights", w)


def fit_lr(frame: SupervisedFrame) -> LinearModel:
    """Least squares with intercept via column-pivoted QR.

    A rank-deficient design falls back to the minimum-norm solution
    (SVD-based) and emits a :class:`RankDeficientWarning`.
    """
    X = np.asarray(frame.inputs, dtype=float)
    y = np.asarray(frame.targets, dtype=float)
    n, f = X.shape
    if n <= f:
        raise InsufficientDataError(f"{n} rows cannot fit {f} features plus intercept")
    A = np.hstack([X, np.ones((n, 1))])
    Q, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag[0] * max(A.shape) * np.finfo(float).eps if diag.size else 0.0
    rank = int(np.sum(diag > tol))
    if rank < A.shape[1]:
        warnings.warn(f"design matrix rank {rank} < {A.shape[1]}; using minimum-norm solution",
                      RankDeficientWarning, stacklevel=2)
        coef = np.linalg.lstsq(A, y, rcond=None)[0]
    else:
        coef = np.empty(A.shape[1])
        coef[piv] = scipy.linalg.solve_triangular(R, Q.T @ y)
    return LinearModel(coef[:-1], float(coef[-1]), tuple(frame.feature_names), frame.target_name)


def predict_lr(model: LinearModel, inputs) -> np.ndarray:
    if isinstance(inputs, SupervisedFrame):
        if model.feature_names and tuple(inputs.feature_names) != model.feature_names:
            raise ConfigurationError("frame features do not match model")
        inputs = inputs.inputs
    X = np.asarray(inputs, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[0] == 0:
        return np.empty(0)
    if X.shape[1] != model.weights.shape[0]:
        raise ValueError(f"expected {model.weights.shape[0]} features, got {X.shape[1]}")
    return X @ model.weights + model.intercept


def model_to_dict(model: LinearModel) -> dict:
    return {
        "model": "lr",
        "feature_names": list(model.feature_names),
        "target_name": model.target_name,
        "weights": model.weights.tolist(),
        "intercept": model.intercept,
    }


def model_from_dict(data: dict) -> LinearModel:
    if data.get("model") != "lr":
        raise ConfigurationError("not a linear model file")
    return LinearModel(np.asarray(data["weights"], dtype=float), float(data["intercept"]),
                       tuple(data.get("feature_names", ())), data.get("target_name", "y"))


def save_model(model: LinearModel, path: str | Path) -> None:
    atomic_write_text(path, json.dumps(model_to_dict(model), indent=1) + "\n")


def load_model(path: str | Path) -> LinearModel:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
