"""Per-cluster regressors behind one fit/predict contract."""

from __future__ import annotations

from dataclasses import asdict

import numpy as np

from .base import Regressor, RegressorError, regressor_from_dict, regressor_from_json
from .gbm import GbConfig, GradientBoostingRegressor, gb_fit, gb_predict
from .knn import KnnConfig, KNNRegressor, knn_fit, knn_predict
from .linear import (ConvergenceWarning, Lasso, LassoConfig, LinearRegression, LinearSVR, LinSvrConfig,
                     OlsConfig, lasso_fit, linsvr_fit, ols_fit)

_BY_CONFIG = {
    KnnConfig: ("knn", KNNRegressor),
    GbConfig: ("gb", GradientBoostingRegressor),
    OlsConfig: ("ols", LinearRegression),
    LassoConfig: ("lasso", Lasso),
    LinSvrConfig: ("linsvr", LinearSVR),
}
_BY_KIND = {kind: cfg for cfg, (kind, _) in _BY_CONFIG.items()}


def is_per_load(cfg) -> bool:
    """True when one model is trained per load column (everything but multi-output GB)."""
    return not (isinstance(cfg, GbConfig) and cfg.multi_output)


def min_training_size(cfg) -> int:
    return max(cfg.n_neighbors, 2) if isinstance(cfg, KnnConfig) else 2


def make_regressor(cfg) -> Regressor:
    try:
        return _BY_CONFIG[type(cfg)][1](cfg)
    except KeyError:
        raise RegressorError(f"unsupported regressor config {cfg!r}") from None


def fit_regressor(cfg, X, Y) -> Regressor:
    return make_regressor(cfg).fit(X, Y)


def predict_matrix(r: Regressor, X) -> np.ndarray:
    """Batched prediction, row-for-row identical to ``r.predict_one``."""
    return r.predict(X)


def regressor_to_dict(cfg) -> dict:
    return {"kind": _BY_CONFIG[type(cfg)][0], **asdict(cfg)}


def regressor_from_config_dict(d: dict):
    d = dict(d)
    try:
        cls = _BY_KIND[d.pop("kind")]
    except KeyError:
        raise RegressorError(f"unknown regressor in {d!r}") from None
    return cls(**d)


__all__ = [
    "ConvergenceWarning", "GbConfig", "GradientBoostingRegressor", "KNNRegressor", "KnnConfig", "Lasso",
    "LassoConfig", "LinSvrConfig", "LinearRegression", "LinearSVR", "OlsConfig", "Regressor",
    "RegressorError", "fit_regressor", "gb_fit", "gb_predict", "is_per_load", "knn_fit", "knn_predict",
    "lasso_fit", "linsvr_fit", "make_regressor", "min_training_size", "ols_fit", "predict_matrix",
    "regressor_from_config_dict", "regressor_from_dict", "regressor_from_json", "regressor_to_dict",
]
