"""Ordinary least squares baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PvBoostError


@dataclass(frozen=True)
class LinearModel:
    weights: tuple[float, ...]
    intercept: float


def fit_ols(features, labels, ridge_eps: float = 1e-8) -> LinearModel:
    """Least squares via normal equations on centered data.

    If the Gram matrix is (near-)singular the solve is retried with
    ridge_eps added to its diagonal.
    """
    if ridge_eps < 0:
        raise ValueError("ridge_eps must be >= 0")
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError("features must be n x d with n matching labels")

    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    yc = y - y_mean
    gram = Xc.T @ Xc
    rhs = Xc.T @ yc

    def solve(mat: np.ndarray):
        try:
            w = np.linalg.solve(mat, rhs)
        except np.linalg.LinAlgError:
            return None
        return w if np.all(np.isfinite(w)) else None

    w = None
    if np.linalg.cond(gram) < 1e12:
        w = solve(gram)
    if w is None:
        w = solve(gram + ridge_eps * np.eye(gram.shape[0]))
    if w is None:
        raise PvBoostError("normal equations singular even with ridge_eps")
    intercept = y_mean - float(w @ x_mean)
    return LinearModel(tuple(float(v) for v in w), intercept)


def predict_linear(model: LinearModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (len(model.weights),):
        raise ValueError(f"expected {len(model.weights)} features")
    return float(np.dot(model.weights, x) + model.intercept)


def predict_linear_batch(model: LinearModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return X @ np.asarray(model.weights) + model.intercept
