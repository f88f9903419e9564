"""Gradient-boosted regression trees with squared loss and exact greedy splits.

One tree per boosting round.  With several outputs the tree is vector-valued:
leaves hold mean residual vectors and a split is scored by the variance
reduction summed over outputs.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

from .base import Regressor, RegressorError, check_xy, register


@dataclass(frozen=True)
class GbConfig:
    n_estimators: int = 500
    learning_rate: float = 0.3
    max_depth: int = 7
    min_samples_leaf: int = 1
    multi_output: bool = True

    def __post_init__(self):
        if self.n_estimators < 1 or self.learning_rate <= 0 or self.max_depth < 1 or self.min_samples_leaf < 1:
            raise RegressorError(f"invalid GbConfig {self}")


@njit(cache=True, nogil=True)
def _boost(X, R, order, n_estimators, lr, max_depth, min_leaf):
    """Fit the ensemble in place on residuals R (targets minus base score).

    ``order[f]`` lists sample indices sorted by feature f; node segments are
    kept contiguous in every feature order by stable partitioning, so each
    level costs O(d * n).  Returns flat node arrays, per-tree offsets and the
    training RMSE before the first and after every round.
    """
    n, d = X.shape
    L = R.shape[1]
    per_tree = min(2 ** (max_depth + 1) - 1, 2 * (n // min_leaf) - 1)
    if per_tree < 1:
        per_tree = 1
    cap = n_estimators * per_tree
    feat = np.full(cap, -1, dtype=np.int64)
    thr = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, L))
    tree_start = np.zeros(n_estimators + 1, dtype=np.int64)
    rmse = np.empty(n_estimators + 1)

    work = np.empty_like(order)
    buf = np.empty(n, dtype=np.int64)
    goes_left = np.zeros(n, dtype=np.bool_)
    st_s = np.empty(per_tree, dtype=np.int64)
    st_e = np.empty(per_tree, dtype=np.int64)
    st_dep = np.empty(per_tree, dtype=np.int64)
    st_node = np.empty(per_tree, dtype=np.int64)
    tot = np.empty(L)
    lsum = np.empty(L)

    acc = 0.0
    for i in range(n):
        for l in range(L):
            acc += R[i, l] * R[i, l]
    rmse[0] = np.sqrt(acc / (n * L))

    node_count = 0
    for t in range(n_estimators):
        tree_start[t] = node_count
        work[:, :] = order
        st_s[0] = 0
        st_e[0] = n
        st_dep[0] = 0
        st_node[0] = node_count
        node_count += 1
        sp = 1
        while sp > 0:
            sp -= 1
            s = st_s[sp]
            e = st_e[sp]
            dep = st_dep[sp]
            node = st_node[sp]
            cnt = e - s
            tot[:] = 0.0
            for p in range(s, e):
                i = work[0, p]
                for l in range(L):
                    tot[l] += R[i, l]

            best_f = -1
            best_p = -1
            best_gain = 0.0
            if dep < max_depth and cnt >= 2 * min_leaf:
                parent = 0.0
                for l in range(L):
                    parent += tot[l] * tot[l]
                parent /= cnt
                for f in range(d):
                    lsum[:] = 0.0
                    for p in range(s, e - 1):
                        i = work[f, p]
                        for l in range(L):
                            lsum[l] += R[i, l]
                        nl = p - s + 1
                        nr = cnt - nl
                        if nr < min_leaf:
                            break
                        if nl < min_leaf:
                            continue
                        if X[work[f, p + 1], f] <= X[i, f]:
                            continue
                        sc = 0.0
                        for l in range(L):
                            rs = tot[l] - lsum[l]
                            sc += lsum[l] * lsum[l] / nl + rs * rs / nr
                        gain = sc - parent
                        if gain > best_gain:
                            best_gain = gain
                            best_f = f
                            best_p = p

            if best_f < 0:
                # leaf: store mean residual and shrink residuals of its samples
                for l in range(L):
                    value[node, l] = tot[l] / cnt
                for p in range(s, e):
                    i = work[0, p]
                    for l in range(L):
                        R[i, l] -= lr * value[node, l]
                continue

            lo = X[work[best_f, best_p], best_f]
            hi = X[work[best_f, best_p + 1], best_f]
            th = 0.5 * (lo + hi)
            if th >= hi:
                th = lo
            feat[node] = best_f
            thr[node] = th
            for p in range(s, e):
                i = work[0, p]
                goes_left[i] = X[i, best_f] <= th
            n_left = 0
            for f in range(d):
                a = s
                b = 0
                for p in range(s, e):
                    i = work[f, p]
                    if goes_left[i]:
                        work[f, a] = i
                        a += 1
                    else:
                        buf[b] = i
                        b += 1
                for q in range(b):
                    work[f, a + q] = buf[q]
                n_left = a - s
            lc = node_count
            rc = node_count + 1
            node_count += 2
            left[node] = lc
            right[node] = rc
            # right pushed first so the left subtree is built first
            st_s[sp] = s + n_left
            st_e[sp] = e
            st_dep[sp] = dep + 1
            st_node[sp] = rc
            sp += 1
            st_s[sp] = s
            st_e[sp] = s + n_left
            st_dep[sp] = dep + 1
            st_node[sp] = lc
            sp += 1

        acc = 0.0
        for i in range(n):
            for l in range(L):
                acc += R[i, l] * R[i, l]
        rmse[t + 1] = np.sqrt(acc / (n * L))
    tree_start[n_estimators] = node_count
    return feat[:node_count], thr[:node_count], left[:node_count], right[:node_count], \
        value[:node_count], tree_start, rmse


@njit(cache=True, nogil=True)
def _predict(X, base, feat, thr, left, right, value, tree_start, lr):
    n = X.shape[0]
    L = base.shape[0]
    n_trees = tree_start.shape[0] - 1
    out = np.empty((n, L))
    for i in range(n):
        for l in range(L):
            out[i, l] = base[l]
        for t in range(n_trees):
            node = tree_start[t]
            while feat[node] >= 0:
                if X[i, feat[node]] <= thr[node]:
                    node = left[node]
                else:
                    node = right[node]
            for l in range(L):
                out[i, l] += lr * value[node, l]
    return out


def _column_mean(Y):
    # anchoring at the first row keeps constant columns exact
    y0 = Y[0]
    return y0 + (Y - y0).mean(axis=0)


@register
class GradientBoostingRegressor(Regressor):
    kind = "gb"

    def __init__(self, cfg: GbConfig = GbConfig()):
        self.cfg = cfg

    def fit(self, X, Y) -> "GradientBoostingRegressor":
        X, Y = check_xy(X, Y)
        cfg = self.cfg
        self.base_ = _column_mean(Y)
        R = np.ascontiguousarray(Y - self.base_)
        order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
        (self.feature_, self.threshold_, self.left_, self.right_, self.value_,
         self.tree_start_, self.train_rmse_) = _boost(
            X, R, order, cfg.n_estimators, float(cfg.learning_rate), cfg.max_depth, cfg.min_samples_leaf)
        self.n_features = X.shape[1]
        self.output_width = Y.shape[1]
        return self

    def predict(self, X) -> np.ndarray:
        X = self._check_X(X)
        return _predict(X, self.base_, self.feature_, self.threshold_, self.left_, self.right_,
                        self.value_, self.tree_start_, float(self.cfg.learning_rate))

    @property
    def n_nodes(self) -> int:
        return int(self.feature_.shape[0])

    def config_dict(self):
        return asdict(self.cfg)

    def _params(self):
        return {
            "base": self.base_.tolist(),
            "feature": self.feature_.tolist(),
            "threshold": self.threshold_.tolist(),
            "left": self.left_.tolist(),
            "right": self.right_.tolist(),
            "value": self.value_.tolist(),
            "tree_start": self.tree_start_.tolist(),
        }

    @classmethod
    def _from_params(cls, config, params):
        r = cls(GbConfig(**config))
        r.base_ = np.array(params["base"], dtype=np.float64)
        r.feature_ = np.array(params["feature"], dtype=np.int64)
        r.threshold_ = np.array(params["threshold"], dtype=np.float64)
        r.left_ = np.array(params["left"], dtype=np.int64)
        r.right_ = np.array(params["right"], dtype=np.int64)
        r.value_ = np.ascontiguousarray(np.array(params["value"], dtype=np.float64).reshape(-1, r.base_.size))
        r.tree_start_ = np.array(params["tree_start"], dtype=np.int64)
        return r


def gb_fit(X, Y, cfg: GbConfig = GbConfig(), multi_output: bool | None = None) -> GradientBoostingRegressor:
    """Fit boosted trees; ``multi_output`` (default from cfg) requires Y of width 1 when False."""
    Y = np.asarray(Y, dtype=np.float64)
    mo = cfg.multi_output if multi_output is None else multi_output
    if not mo and Y.ndim == 2 and Y.shape[1] != 1:
        raise RegressorError("single-output boosting needs a single target column")
    return GradientBoostingRegressor(cfg).fit(X, Y)


def gb_predict(r: GradientBoostingRegressor, x) -> np.ndarray:
    return r.predict_one(x)
