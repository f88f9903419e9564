"""Clustering of training features: K-means, OT K-means, DBSCAN, Mean Shift.

Every method returns a :class:`ClusterModel` carrying explicit centroids, so
test-time assignment is always nearest-centroid in squared Euclidean distance.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree
from scipy.special import logsumexp

from . import _kernels as K

METHODS = ("kmeans", "ot_kmeans", "dbscan", "meanshift")


class ClusteringError(ValueError):
    pass


class SinkhornWarning(RuntimeWarning):
    pass


class SinkhornConvergenceError(RuntimeError):
    def __init__(self, residual: float, n_iter: int):
        super().__init__(f"Sinkhorn did not converge after {n_iter} iterations (marginal residual {residual:.3e})")
        self.residual = residual
        self.n_iter = n_iter


def _as_matrix(X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ClusteringError(f"expected a 2-d feature matrix, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise ClusteringError("features contain non-finite values")
    return X


@dataclass(frozen=True)
class ClusterModel:
    centroids: np.ndarray
    labels: np.ndarray
    method: str
    config: dict = field(default_factory=dict)
    inertia: float | None = None
    n_iter: int = 0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        C = np.ascontiguousarray(self.centroids, dtype=np.float64)
        lab = np.asarray(self.labels, dtype=np.int64)
        if C.ndim != 2 or C.shape[0] < 1:
            raise ClusteringError("centroids must be a nonempty k x d matrix")
        if lab.size and (lab.min() < 0 or lab.max() >= C.shape[0]):
            raise ClusteringError("labels out of range")
        if self.method not in METHODS:
            raise ClusteringError(f"unknown method {self.method!r}")
        C.setflags(write=False)
        lab.setflags(write=False)
        object.__setattr__(self, "centroids", C)
        object.__setattr__(self, "labels", lab)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)

    def assign(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.centroids.shape[1]:
            raise ClusteringError(f"expected {self.centroids.shape[1]} features, got shape {X.shape}")
        return K.nearest_centroid(X, self.centroids)[0]

    def to_dict(self) -> dict:
        return {
            "format": "clusterpredict.cluster_model",
            "version": 1,
            "method": self.method,
            "config": self.config,
            "centroids": self.centroids.tolist(),
            "labels": self.labels.tolist(),
            "inertia": self.inertia,
            "n_iter": self.n_iter,
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterModel":
        if d.get("format") != "clusterpredict.cluster_model":
            raise ClusteringError("not a cluster model document")
        C = np.array(d["centroids"], dtype=np.float64)
        return cls(C.reshape(len(d["centroids"]), -1), np.array(d["labels"], dtype=np.int64),
                   d["method"], d.get("config", {}), d.get("inertia"), d.get("n_iter", 0), d.get("diagnostics", {}))

    @classmethod
    def from_json(cls, text: str) -> "ClusterModel":
        return cls.from_dict(json.loads(text))


def assign_to_cluster(x, model: ClusterModel) -> int:
    """Nearest centroid in squared Euclidean distance, lowest index on ties."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ClusteringError("assign_to_cluster takes a single feature vector")
    return int(model.assign(x[None, :])[0])


def sse(X, centroids, labels) -> float:
    diff = X - centroids[labels]
    return float(np.einsum("ij,ij->", diff, diff))


# ------------------------------------------------------------------------ K-means


@dataclass(frozen=True)
class KMeansConfig:
    """``tol`` bounds the final centroid shift; runs actually stop at a label
    fixed point, where the shift is exactly zero."""

    k: int
    n_init: int = 10
    max_iter: int = 300
    tol: float = 1e-6
    seed: int = 0


def kmeans_plusplus(X, k, rng) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    first = rng.integers(n)
    centers[0] = X[first]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centers[j] = X[idx]
        d2 = np.minimum(d2, ((X - centers[j]) ** 2).sum(axis=1))
    return centers


def _update_centroids(X, labels, k):
    """Member means; empty clusters are re-seeded at the worst-fit point.

    ``labels`` is modified in place when a repair moves a point.
    """
    sums, counts = K.cluster_sums(X, labels, k)
    C = np.zeros_like(sums)
    nz = counts > 0
    C[nz] = sums[nz] / counts[nz, None]
    empty = np.flatnonzero(~nz)
    if empty.size:
        d2 = ((X - C[labels]) ** 2).sum(axis=1)
        for j in empty:
            donors = counts[labels] > 1
            cand = np.where(donors, d2, -1.0)
            i = int(np.argmax(cand))
            if cand[i] < 0:
                raise ClusteringError("cannot repair empty cluster: fewer distinct points than clusters")
            old = labels[i]
            labels[i] = j
            counts[old] -= 1
            counts[j] = 1
            d2[i] = 0.0
        sums, counts = K.cluster_sums(X, labels, k)
        C = sums / counts[:, None]
    return C


def lloyd(X, init_centroids, max_iter=300):
    """One Lloyd run from the given centroids.

    Iterates until the assignment is a fixed point (labels unchanged, hence zero
    centroid shift) or ``max_iter`` updates. Returns (centroids, labels,
    sse_history, n_iter) where the history holds the SSE after every update.
    """
    X = _as_matrix(X)
    C = np.ascontiguousarray(init_centroids, dtype=np.float64)
    k = C.shape[0]
    labels = K.nearest_centroid(X, C)[0]
    history = []
    it = 0
    while True:
        C = _update_centroids(X, labels, k)
        history.append(sse(X, C, labels))
        it += 1
        new_labels = K.nearest_centroid(X, C)[0]
        # at the cap keep the labels C was computed from, so C stays their mean
        if it >= max_iter or np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return C, labels, history, it


def _check_k(k, m):
    if k < 1:
        raise ClusteringError("k must be at least 1")
    if k > m:
        raise ClusteringError(f"k={k} exceeds number of samples m={m}")


def kmeans_fit(X, cfg: KMeansConfig) -> ClusterModel:
    """Best of ``n_init`` k-means++ seeded Lloyd runs, by SSE."""
    X = _as_matrix(X)
    _check_k(cfg.k, X.shape[0])
    if cfg.n_init < 1 or cfg.max_iter < 1:
        raise ClusteringError("n_init and max_iter must be positive")
    best = None
    for ss in np.random.SeedSequence(cfg.seed).spawn(cfg.n_init):
        init = kmeans_plusplus(X, cfg.k, np.random.default_rng(ss))
        C, labels, hist, n_iter = lloyd(X, init, cfg.max_iter)
        if best is None or hist[-1] < best[2]:
            best = (C, labels, hist[-1], n_iter)
    C, labels, inertia, n_iter = best
    return ClusterModel(C, labels, "kmeans", asdict(cfg), inertia, n_iter)


# --------------------------------------------------------------------- Sinkhorn


def sinkhorn(cost, mu, nu, reg: float, max_iter: int = 1000, tol: float = 1e-9, relax: float = 1.0) -> np.ndarray:
    """Entropic OT plan between histograms ``mu`` and ``nu``.

    Returns P = diag(u) exp(-cost/reg) diag(v) whose row sums match ``mu`` and
    column sums match ``nu`` to ``tol`` (max absolute deviation).
    """
    P, _, _ = sinkhorn_potentials(cost, mu, nu, reg, max_iter, tol, relax=relax)
    return P


_ABSORB = 1e50


def _lse_rows(A):
    return logsumexp(A, axis=1)


def _sinkhorn_stabilized(C, log_mu, log_nu, reg, max_iter, tol, g, relax=1.0):
    """Scaling iterations on a kernel with absorbed dual potentials.

    The working kernel is exp((f_i + g_j - C_ij) / reg); the scalings u, v are
    folded back into (f, g) whenever they leave [1/_ABSORB, _ABSORB], so the
    iteration never under- or overflows.  ``relax`` > 1 over-relaxes each
    scaling update (same fixed point, far fewer iterations at small reg); if
    the marginal error ever grows between checks it drops back to plain
    Sinkhorn.  Rows are exact after each u-update and convergence is measured
    on the column marginals.
    """
    mu, nu = np.exp(log_mu), np.exp(log_nu)
    # exact log-domain half steps first, so a stale warm start cannot leave
    # kernel columns many orders of magnitude off their marginals
    f = reg * (log_mu - _lse_rows((g[None, :] - C) / reg))
    g = reg * (log_nu - _lse_rows(((f[:, None] - C) / reg).T))
    f = reg * (log_mu - _lse_rows((g[None, :] - C) / reg))
    Kt = np.exp((f[:, None] + g[None, :] - C) / reg)
    u = np.ones_like(mu)
    v = np.ones_like(nu)
    w = float(relax)
    err = prev_err = np.inf
    it = 0
    while it < max_iter:
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            if w == 1.0:
                v = nu / (Kt.T @ u)
                u = mu / (Kt @ v)
            else:
                v = v ** (1 - w) * (nu / (Kt.T @ u)) ** w
                u = u ** (1 - w) * (mu / (Kt @ v)) ** w
        it += 1
        bad = not (np.isfinite(u).all() and np.isfinite(v).all())
        if bad or u.max() > _ABSORB or v.max() > _ABSORB or u.min() < 1 / _ABSORB or v.min() < 1 / _ABSORB:
            if bad:
                # exact log-domain half steps recover from kernel underflow
                g = reg * (log_nu - _lse_rows(((f[:, None] - C) / reg).T))
                f = reg * (log_mu - _lse_rows((g[None, :] - C) / reg))
            else:
                f = f + reg * np.log(u)
                g = g + reg * np.log(v)
            Kt = np.exp((f[:, None] + g[None, :] - C) / reg)
            u = np.ones_like(mu)
            v = np.ones_like(nu)
            continue
        if it % 10 == 1 or it == max_iter:
            if w != 1.0:
                # error of the plain projection of the current iterate
                u = mu / (Kt @ v)
            err = float(np.abs(v * (Kt.T @ u) - nu).max())
            if err < tol:
                break
            if err > prev_err:
                w = 1.0
            prev_err = err
    with np.errstate(divide="ignore"):
        f = f + reg * np.log(u)
        g = g + reg * np.log(v)
    return f, g, err, it


def sinkhorn_potentials(cost, mu, nu, reg, max_iter=1000, tol=1e-9, g_init=None, return_plan=True, relax=1.0):
    """Sinkhorn solve returning (plan or None, f, g) with plan = exp((f_i + g_j - C_ij)/reg)."""
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    if cost.ndim != 2 or cost.shape != (mu.size, nu.size):
        raise ClusteringError(f"cost shape {cost.shape} does not match marginals ({mu.size}, {nu.size})")
    if reg <= 0:
        raise ClusteringError("reg must be positive")
    if (mu < 0).any() or (nu < 0).any() or abs(mu.sum() - 1) > 1e-9 or abs(nu.sum() - 1) > 1e-9:
        raise ClusteringError("marginals must be nonnegative and sum to 1")
    if not np.isfinite(cost).all():
        raise ClusteringError("cost matrix contains non-finite values")
    # zero-mass rows/columns carry no plan entries; solve on the support only
    rows, cols = np.flatnonzero(mu > 0), np.flatnonzero(nu > 0)
    sub = cost[np.ix_(rows, cols)]
    g0 = np.zeros(cols.size) if g_init is None else np.asarray(g_init, dtype=np.float64)[cols]
    fs, gs, err, n_iter = _sinkhorn_stabilized(sub, np.log(mu[rows]), np.log(nu[cols]), float(reg),
                                               int(max_iter), float(tol), g0, relax)
    if not err < tol:
        raise SinkhornConvergenceError(err, n_iter)
    f = np.full(mu.size, -np.inf)
    g = np.full(nu.size, -np.inf)
    f[rows], g[cols] = fs, gs
    P = None
    if return_plan:
        P = np.zeros_like(cost)
        P[np.ix_(rows, cols)] = np.exp((fs[:, None] + gs[None, :] - sub) / reg)
    return P, f, g


@dataclass(frozen=True)
class OtKMeansConfig:
    k: int
    reg: float = 0.1
    sinkhorn_max_iter: int = 1000
    sinkhorn_tol: float = 1e-9
    outer_max_iter: int = 100
    tol: float = 1e-6
    seed: int = 0
    sinkhorn_relax: float = 1.8
    strict: bool = False


def _repair_from_plan_scores(score, labels, k):
    """Give each empty cluster the point with the highest score for it."""
    counts = np.bincount(labels, minlength=k)
    for j in np.flatnonzero(counts == 0):
        cand = np.where(counts[labels] > 1, score[:, j], -np.inf)
        i = int(np.argmax(cand))
        counts[labels[i]] -= 1
        labels[i] = j
        counts[j] = 1
    return labels


def ot_kmeans_fit(X, cfg: OtKMeansConfig, return_plan: bool = False):
    """K-means whose assignment step is a balanced entropic OT problem.

    Points carry mass 1/m, clusters 1/k; each point is hardened to the column
    holding most of its transported mass.  On well separated data the balanced
    problem can be too ill-conditioned for Sinkhorn to reach ``sinkhorn_tol``;
    such solves keep their last iterate and are reported through a
    :class:`SinkhornWarning` and ``model.diagnostics``, or raise
    :class:`SinkhornConvergenceError` when ``cfg.strict`` is set.
    """
    X = _as_matrix(X)
    m = X.shape[0]
    _check_k(cfg.k, m)
    if cfg.reg <= 0:
        raise ClusteringError("reg must be positive")
    k = cfg.k
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    C = kmeans_plusplus(X, k, rng)
    log_mu = np.full(m, -np.log(m))
    log_nu = np.full(k, -np.log(k))
    g = np.zeros(k)
    n_iter = 0
    unconverged, worst = 0, 0.0
    for n_iter in range(1, cfg.outer_max_iter + 1):
        cost = K.sqdist_matrix(X, C)
        f, g, err, nit = _sinkhorn_stabilized(cost, log_mu, log_nu, float(cfg.reg),
                                              int(cfg.sinkhorn_max_iter), float(cfg.sinkhorn_tol), g,
                                              cfg.sinkhorn_relax)
        if not err < cfg.sinkhorn_tol:
            if cfg.strict:
                raise SinkhornConvergenceError(err, nit)
            unconverged += 1
            worst = max(worst, err)
        labels = K.plan_row_argmax(cost, g)
        if np.bincount(labels, minlength=k).min() == 0:
            labels = _repair_from_plan_scores(g[None, :] - cost, labels, k)
        sums, counts = K.cluster_sums(X, labels, k)
        C_new = sums / counts[:, None]
        shift = float(np.abs(C_new - C).max())
        C = C_new
        if shift < cfg.tol:
            break
    if unconverged:
        warnings.warn(f"{unconverged} of {n_iter} Sinkhorn solves stopped at sinkhorn_max_iter "
                      f"(worst marginal residual {worst:.3e})", SinkhornWarning, stacklevel=2)
    diag = {"sinkhorn_unconverged": unconverged, "sinkhorn_max_residual": worst}
    model = ClusterModel(C, labels, "ot_kmeans", asdict(cfg), sse(X, C, labels), n_iter, diag)
    if return_plan:
        return model, np.exp((f[:, None] + g[None, :] - cost) / cfg.reg)
    return model


# ----------------------------------------------------------------------- DBSCAN


@dataclass(frozen=True)
class DbscanConfig:
    eps: float
    min_samples: int = 5


def _model_from_labels(X, labels, method, config):
    k = int(labels.max()) + 1
    sums, counts = K.cluster_sums(X, labels, k)
    return ClusterModel(sums / counts[:, None], labels, method, config, None, 0)


def dbscan_fit(X, eps: float, min_samples: int = 5) -> ClusterModel:
    """Density clustering; leftover noise joins the nearest cluster centroid."""
    X = _as_matrix(X)
    if eps <= 0 or min_samples < 1:
        raise ClusteringError("eps must be positive and min_samples at least 1")
    n = X.shape[0]
    neigh = cKDTree(X).query_ball_point(X, r=eps)
    core = np.array([len(nb) >= min_samples for nb in neigh], dtype=bool)
    labels = np.full(n, -1, dtype=np.int64)
    nclust = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = nclust
        stack = [i]
        while stack:
            p = stack.pop()
            if not core[p]:
                continue
            for q in neigh[p]:
                if labels[q] == -1:
                    labels[q] = nclust
                    stack.append(q)
        nclust += 1
    if nclust == 0:
        raise ClusteringError(f"DBSCAN found no clusters (all noise) with eps={eps}, min_samples={min_samples}; "
                              "increase eps or lower min_samples")
    noise = labels == -1
    if noise.any():
        sums, counts = K.cluster_sums(X[~noise], labels[~noise], nclust)
        labels[noise] = K.nearest_centroid(np.ascontiguousarray(X[noise]), sums / counts[:, None])[0]
    return _model_from_labels(X, labels, "dbscan", {"eps": eps, "min_samples": min_samples})


# -------------------------------------------------------------------- Mean Shift


@dataclass(frozen=True)
class MeanShiftConfig:
    bandwidth: float
    max_iter: int = 300


def meanshift_fit(X, bandwidth: float, max_iter: int = 300) -> ClusterModel:
    """Flat-kernel mean shift seeded at every training point."""
    X = _as_matrix(X)
    if bandwidth <= 0:
        raise ClusteringError("bandwidth must be positive")
    n = X.shape[0]
    tree = cKDTree(X)
    pts = X.copy()
    active = np.arange(n)
    stop = 1e-6 * bandwidth
    for _ in range(max_iter):
        if active.size == 0:
            break
        nbrs = tree.query_ball_point(pts[active], r=bandwidth)
        lens = np.fromiter((len(nb) for nb in nbrs), dtype=np.int64, count=active.size)
        indptr = np.concatenate(([0], np.cumsum(lens)))
        indices = np.fromiter((j for nb in nbrs for j in nb), dtype=np.int64, count=indptr[-1])
        W = sp.csr_matrix((np.ones(indices.size), indices, indptr), shape=(active.size, n))
        new = (W @ X) / lens[:, None]
        shift = np.sqrt(((new - pts[active]) ** 2).sum(axis=1))
        pts[active] = new
        active = active[shift >= stop]

    modes = []
    for p in pts:
        if not any(np.sqrt(((p - q) ** 2).sum()) < bandwidth / 2 for q in modes):
            modes.append(p)
    labels = K.nearest_centroid(X, np.array(modes))[0]
    _, labels = np.unique(labels, return_inverse=True)
    return _model_from_labels(X, labels.astype(np.int64), "meanshift",
                              {"bandwidth": bandwidth, "max_iter": max_iter})


# -------------------------------------------------------------------- silhouette


def silhouette(X, labels, sample_size: int | None = None, seed: int = 0) -> float:
    """Mean silhouette coefficient with Euclidean distance.

    With ``sample_size`` the score is computed on a seeded row subsample.
    """
    X = _as_matrix(X)
    labels = np.asarray(labels)
    if labels.shape != (X.shape[0],):
        raise ClusteringError("labels must have one entry per row")
    if sample_size is not None and sample_size < X.shape[0]:
        idx = np.sort(np.random.default_rng(seed).choice(X.shape[0], sample_size, replace=False))
        X, labels = np.ascontiguousarray(X[idx]), labels[idx]
    _, lab = np.unique(labels, return_inverse=True)
    k = int(lab.max()) + 1 if lab.size else 0
    if k < 2:
        raise ClusteringError("silhouette needs at least 2 clusters")
    return float(K.silhouette_samples(X, lab.astype(np.int64), k).mean())


def fit_clusterer(X, cfg) -> ClusterModel:
    """Dispatch on the config type."""
    if isinstance(cfg, KMeansConfig):
        return kmeans_fit(X, cfg)
    if isinstance(cfg, OtKMeansConfig):
        return ot_kmeans_fit(X, cfg)
    if isinstance(cfg, DbscanConfig):
        return dbscan_fit(X, cfg.eps, cfg.min_samples)
    if isinstance(cfg, MeanShiftConfig):
        return meanshift_fit(X, cfg.bandwidth, cfg.max_iter)
    raise ClusteringError(f"unsupported clusterer config {cfg!r}")


_CONFIGS = {"kmeans": KMeansConfig, "ot_kmeans": OtKMeansConfig, "dbscan": DbscanConfig,
            "meanshift": MeanShiftConfig}


def clusterer_to_dict(cfg) -> dict:
    for name, cls in _CONFIGS.items():
        if type(cfg) is cls:
            return {"method": name, **asdict(cfg)}
    raise ClusteringError(f"unsupported clusterer config {cfg!r}")


def clusterer_from_dict(d: dict):
    d = dict(d)
    try:
        cls = _CONFIGS[d.pop("method")]
    except KeyError:
        raise ClusteringError(f"unknown clusterer in {d!r}") from None
    return cls(**d)
