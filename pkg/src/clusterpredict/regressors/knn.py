"""Brute-force k-nearest-neighbour regression."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

from .base import Regressor, RegressorError, check_xy, register


@dataclass(frozen=True)
class KnnConfig:
    n_neighbors: int = 5


@njit(cache=True, nogil=True)
def _knn_mean(Xtr, Ytr, Xq, k):
    n, d = Xtr.shape
    L = Ytr.shape[1]
    out = np.empty((Xq.shape[0], L))
    bd = np.empty(k)
    bi = np.empty(k, dtype=np.int64)
    for q in range(Xq.shape[0]):
        bd[:] = np.inf
        bi[:] = -1
        for j in range(n):
            s = 0.0
            for t in range(d):
                diff = Xtr[j, t] - Xq[q, t]
                s += diff * diff
            if s < bd[k - 1]:
                # equal distances keep the earlier (lower) training index first
                p = k - 1
                while p > 0 and bd[p - 1] > s:
                    bd[p] = bd[p - 1]
                    bi[p] = bi[p - 1]
                    p -= 1
                bd[p] = s
                bi[p] = j
        for l in range(L):
            acc = 0.0
            for r in range(k):
                acc += Ytr[bi[r], l]
            out[q, l] = acc / k
    return out


@register
class KNNRegressor(Regressor):
    kind = "knn"

    def __init__(self, cfg: KnnConfig = KnnConfig()):
        if cfg.n_neighbors < 1:
            raise RegressorError("n_neighbors must be at least 1")
        self.cfg = cfg

    def fit(self, X, Y) -> "KNNRegressor":
        X, Y = check_xy(X, Y)
        if self.cfg.n_neighbors > X.shape[0]:
            raise RegressorError(f"n_neighbors={self.cfg.n_neighbors} exceeds training size {X.shape[0]}")
        self.X_, self.Y_ = X, Y
        self.n_features = X.shape[1]
        self.output_width = Y.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        X = self._check_X(X)
        if self.cfg.n_neighbors > self.X_.shape[0]:
            raise RegressorError("n_neighbors exceeds stored training size")
        if X.shape[0] == 0:
            return np.empty((0, self.output_width))
        return _knn_mean(self.X_, self.Y_, X, self.cfg.n_neighbors)

    def config_dict(self):
        return asdict(self.cfg)

    def _params(self):
        return {"X": self.X_.tolist(), "Y": self.Y_.tolist()}

    @classmethod
    def _from_params(cls, config, params):
        r = cls(KnnConfig(**config))
        d = len(params["X"][0])
        r.X_ = np.ascontiguousarray(np.array(params["X"], dtype=np.float64).reshape(-1, d))
        r.Y_ = np.ascontiguousarray(np.array(params["Y"], dtype=np.float64).reshape(r.X_.shape[0], -1))
        return r


def knn_fit(X, y, cfg: KnnConfig = KnnConfig()) -> KNNRegressor:
    return KNNRegressor(cfg).fit(X, y)


def knn_predict(r: KNNRegressor, x) -> np.ndarray:
    return r.predict_one(x)
