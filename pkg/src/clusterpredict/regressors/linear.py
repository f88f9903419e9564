"""Linear single-output regressors: least squares, Lasso and linear SVR."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit
from scipy.linalg import cho_factor, cho_solve

from .base import Regressor, RegressorError, check_xy, register


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class OlsConfig:
    pass


@dataclass(frozen=True)
class LassoConfig:
    lam: float = 0.01
    tol: float = 1e-8
    max_iter: int = 100_000


@dataclass(frozen=True)
class LinSvrConfig:
    C: float = 1.0
    epsilon: float = 0.1
    epochs: int = 30
    batch_size: int = 256
    step: float = 0.5
    seed: int = 0


class _Linear(Regressor):
    def predict(self, X) -> np.ndarray:
        X = self._check_X(X)
        # column-wise accumulation keeps each row's result independent of batch size
        out = np.full(X.shape[0], self.intercept_)
        for j in range(X.shape[1]):
            out += X[:, j] * self.coef_[j]
        return out[:, None]

    def _single(self, X, y):
        X, Y = check_xy(X, y)
        if Y.shape[1] != 1:
            raise RegressorError(f"{self.kind} fits a single target column")
        self.n_features = X.shape[1]
        self.output_width = 1
        return X, Y[:, 0]

    def _params(self):
        return {"coef": self.coef_.tolist(), "intercept": self.intercept_}

    def _set(self, params):
        self.coef_ = np.array(params["coef"], dtype=np.float64)
        self.intercept_ = float(params["intercept"])
        return self


@register
class LinearRegression(_Linear):
    """Least squares through the centered normal equations."""

    kind = "ols"

    def __init__(self, cfg: OlsConfig = OlsConfig()):
        self.cfg = cfg

    def fit(self, X, y) -> "LinearRegression":
        X, y = self._single(X, y)
        xm, ym = X.mean(axis=0), y.mean()
        Xc = X - xm
        A = Xc.T @ Xc
        b = Xc.T @ (y - ym)
        self.jitter_ = 0.0
        try:
            if X.shape[0] <= X.shape[1]:
                raise np.linalg.LinAlgError
            coef = cho_solve(cho_factor(A), b)
        except np.linalg.LinAlgError:
            d = X.shape[1]
            self.jitter_ = 1e-10 * np.trace(A) / d
            if not self.jitter_ > 0:
                raise RegressorError("singular system: all features constant") from None
            coef = np.linalg.solve(A + self.jitter_ * np.eye(d), b)
        self.coef_ = coef
        self.intercept_ = float(ym - xm @ coef)
        return self

    @classmethod
    def _from_params(cls, config, params):
        return cls()._set(params)


@njit(cache=True, nogil=True)
def _lasso_cd(XT, y, lam, tol, max_iter):
    """Cyclic coordinate descent for (1/2n)||y - Xw||^2 + lam ||w||_1 on centered data.

    Takes the transposed design so each feature column is contiguous.
    """
    d, n = XT.shape
    w = np.zeros(d)
    r = y.copy()
    z = np.empty(d)
    for j in range(d):
        z[j] = (XT[j] @ XT[j]) / n
    it = 0
    delta = np.inf
    while it < max_iter:
        delta = 0.0
        for j in range(d):
            if z[j] == 0.0:
                continue
            rho = (XT[j] @ r) / n + z[j] * w[j]
            if rho > lam:
                new = (rho - lam) / z[j]
            elif rho < -lam:
                new = (rho + lam) / z[j]
            else:
                new = 0.0
            step = new - w[j]
            if step != 0.0:
                r -= step * XT[j]
                w[j] = new
                if abs(step) > delta:
                    delta = abs(step)
        it += 1
        if delta < tol:
            break
    return w, it, delta


@register
class Lasso(_Linear):
    """L1-penalised least squares, unpenalised intercept."""

    kind = "lasso"

    def __init__(self, cfg: LassoConfig = LassoConfig()):
        if cfg.lam < 0:
            raise RegressorError("lambda must be nonnegative")
        self.cfg = cfg

    def fit(self, X, y) -> "Lasso":
        X, y = self._single(X, y)
        xm, ym = X.mean(axis=0), y.mean()
        XT = np.ascontiguousarray((X - xm).T)
        w, n_iter, delta = _lasso_cd(XT, y - ym, float(self.cfg.lam), float(self.cfg.tol), int(self.cfg.max_iter))
        if not delta < self.cfg.tol:
            warnings.warn(f"Lasso stopped after {n_iter} sweeps with coefficient change {delta:.2e}",
                          ConvergenceWarning, stacklevel=2)
        self.n_iter_ = int(n_iter)
        self.coef_ = w
        self.intercept_ = float(ym - xm @ w)
        return self

    def config_dict(self):
        return asdict(self.cfg)

    @classmethod
    def _from_params(cls, config, params):
        return cls(LassoConfig(**config))._set(params)


def _svr_objective(X, y, w, b, C, eps):
    loss = np.maximum(np.abs(y - X @ w - b) - eps, 0.0).sum()
    return 0.5 * (w @ w) + C * loss


@register
class LinearSVR(_Linear):
    """Epsilon-insensitive linear regression by mini-batch subgradient descent.

    Minimises C * sum(max(0, |y - Xw - b| - epsilon)) + 0.5 * ||w||^2.  Targets
    are rescaled by their standard deviation internally (an exact
    reparametrisation); the step size decays as step / sqrt(t) and the best
    epoch-end iterate by full objective is kept.
    """

    kind = "linsvr"

    def __init__(self, cfg: LinSvrConfig = LinSvrConfig()):
        if cfg.C <= 0 or cfg.epsilon < 0:
            raise RegressorError("C must be positive and epsilon nonnegative")
        self.cfg = cfg

    def fit(self, X, y) -> "LinearSVR":
        X, y = self._single(X, y)
        cfg = self.cfg
        n, d = X.shape
        s = float(y.std()) or 1.0
        ys, eps, C = y / s, cfg.epsilon / s, cfg.C / s
        lam = 1.0 / (C * n)
        rng = np.random.default_rng(cfg.seed)
        w = np.zeros(d)
        b = float(np.median(ys))
        best = (_svr_objective(X, ys, w, b, C, eps), w.copy(), b)
        t = 0
        for _ in range(cfg.epochs):
            perm = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = perm[start:start + cfg.batch_size]
                r = ys[idx] - X[idx] @ w - b
                g = np.where(r > eps, -1.0, np.where(r < -eps, 1.0, 0.0))
                t += 1
                eta = cfg.step / np.sqrt(t)
                w -= eta * (lam * w + X[idx].T @ g / idx.size)
                b -= eta * g.mean()
            obj = _svr_objective(X, ys, w, b, C, eps)
            if obj < best[0]:
                best = (obj, w.copy(), b)
        self.coef_ = best[1] * s
        self.intercept_ = float(best[2] * s)
        return self

    def config_dict(self):
        return asdict(self.cfg)

    @classmethod
    def _from_params(cls, config, params):
        return cls(LinSvrConfig(**config))._set(params)


def ols_fit(X, y) -> LinearRegression:
    return LinearRegression().fit(X, y)


def lasso_fit(X, y, lam: float = 0.01) -> Lasso:
    return Lasso(LassoConfig(lam=lam)).fit(X, y)


def linsvr_fit(X, y, C: float = 1.0, epsilon: float = 0.1, seed: int = 0) -> LinearSVR:
    return LinearSVR(LinSvrConfig(C=C, epsilon=epsilon, seed=seed)).fit(X, y)
