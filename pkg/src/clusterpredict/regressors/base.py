from __future__ import annotations

import json

import numpy as np

FORMAT = "clusterpredict.regressor"
VERSION = 1

_REGISTRY: dict[str, type] = {}


class RegressorError(ValueError):
    pass


def register(cls):
    _REGISTRY[cls.kind] = cls
    return cls


def check_xy(X, Y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    Y = np.ascontiguousarray(Y)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise RegressorError(f"incompatible shapes X{X.shape}, Y{Y.shape}")
    if X.shape[0] == 0:
        raise RegressorError("empty training set")
    if not (np.isfinite(X).all() and np.isfinite(Y).all()):
        raise RegressorError("training data contains non-finite values")
    return X, Y


class Regressor:
    """Fitted model with a uniform batched ``predict``.

    ``predict`` always returns an (n, output_width) matrix; ``predict_one``
    returns the row for a single sample.
    """

    kind = ""
    n_features: int
    output_width: int

    def _check_X(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise RegressorError(f"{self.kind}: expected {self.n_features} features, got shape {X.shape}")
        return X

    def predict(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict_one(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise RegressorError("predict_one takes a single feature vector")
        return self.predict(x[None, :])[0]

    # serialization -----------------------------------------------------------
    def _params(self) -> dict:
        raise NotImplementedError

    @classmethod
    def _from_params(cls, config: dict, params: dict) -> "Regressor":
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "kind": self.kind,
            "config": self.config_dict(),
            "n_features": self.n_features,
            "output_width": self.output_width,
            "params": self._params(),
        }

    def config_dict(self) -> dict:
        return {}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def regressor_from_dict(d: dict) -> Regressor:
    if d.get("format") != FORMAT:
        raise RegressorError("not a regressor document")
    if d.get("version") != VERSION:
        raise RegressorError(f"unsupported regressor format version {d.get('version')}")
    try:
        cls = _REGISTRY[d["kind"]]
    except KeyError:
        raise RegressorError(f"unknown regressor kind {d.get('kind')!r}") from None
    r = cls._from_params(d.get("config", {}), d["params"])
    r.n_features = int(d["n_features"])
    r.output_width = int(d["output_width"])
    return r


def regressor_from_json(text: str) -> Regressor:
    return regressor_from_dict(json.loads(text))
