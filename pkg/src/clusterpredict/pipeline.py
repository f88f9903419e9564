"""Cluster-then-predict: divide-and-conquer training and assign-then-predict inference."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels as K
from .clustering import ClusterModel, clusterer_from_dict, clusterer_to_dict, fit_clusterer
from .data import Dataset, StandardScaler
from .regressors import (Regressor, fit_regressor, is_per_load, min_training_size, regressor_from_config_dict,
                         regressor_from_dict, regressor_to_dict)

MANIFEST_FORMAT = "clusterpredict.pipeline"
MANIFEST_VERSION = 1


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class PredictionVector:
    values: np.ndarray
    assigned_cluster: int


@dataclass
class TrainedPipeline:
    """Cluster model plus one regressor bank per cluster.

    Each bank holds either ``L`` single-output regressors (one per load) or a
    single multi-output regressor.
    """

    cluster_model: ClusterModel
    banks: list
    n_loads: int
    counts: np.ndarray
    scaler: StandardScaler | None = None
    clusterer_config: object = None
    regressor_config: object = None
    meta: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return len(self.banks)

    @property
    def n_features(self) -> int:
        return self.cluster_model.centroids.shape[1]

    def _check(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise PipelineError(f"expected {self.n_features} features, got shape {X.shape}")
        return X

    # persistence --------------------------------------------------------------
    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "cluster_model.json").write_text(self.cluster_model.to_json())
        files = []
        for j, bank in enumerate(self.banks):
            name = f"bank_{j:04d}.json"
            (directory / name).write_text(json.dumps({"cluster": j, "regressors": [r.to_dict() for r in bank]}))
            files.append(name)
        manifest = {
            "format": MANIFEST_FORMAT,
            "version": MANIFEST_VERSION,
            "n_loads": self.n_loads,
            "k": self.k,
            "counts": self.counts.tolist(),
            "cluster_model": "cluster_model.json",
            "banks": files,
            "scaler": None if self.scaler is None else self.scaler.to_dict(),
            "clusterer": None if self.clusterer_config is None else clusterer_to_dict(self.clusterer_config),
            "regressor": None if self.regressor_config is None else regressor_to_dict(self.regressor_config),
            "meta": self.meta,
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
        return directory

    @classmethod
    def load(cls, directory) -> "TrainedPipeline":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        if manifest.get("format") != MANIFEST_FORMAT or manifest.get("version") != MANIFEST_VERSION:
            raise PipelineError(f"{directory}: not a pipeline directory of a supported version")
        cm = ClusterModel.from_json((directory / manifest["cluster_model"]).read_text())
        banks = []
        for name in manifest["banks"]:
            doc = json.loads((directory / name).read_text())
            banks.append([regressor_from_dict(r) for r in doc["regressors"]])
        return cls(
            cm,
            banks,
            manifest["n_loads"],
            np.array(manifest["counts"], dtype=np.int64),
            None if manifest["scaler"] is None else StandardScaler.from_dict(manifest["scaler"]),
            None if manifest["clusterer"] is None else clusterer_from_dict(manifest["clusterer"]),
            None if manifest["regressor"] is None else regressor_from_config_dict(manifest["regressor"]),
            manifest.get("meta", {}),
        )


def _fit_bank(X, Y, regressor_cfg) -> list[Regressor]:
    if is_per_load(regressor_cfg):
        return [fit_regressor(regressor_cfg, X, Y[:, l:l + 1]) for l in range(Y.shape[1])]
    return [fit_regressor(regressor_cfg, X, Y)]


def train_divide_conquer(train: Dataset, clusterer, regressor, n_loads: int | None = None,
                         cluster_model: ClusterModel | None = None,
                         scaler: StandardScaler | None = None) -> TrainedPipeline:
    """Cluster the training features, then fit one regressor bank per cluster.

    ``train.features`` are used as given (scale them beforehand); ``scaler`` is
    only stored for later use on raw inputs.  A precomputed ``cluster_model``
    fitted on the same features skips the clustering step.
    """
    X = np.ascontiguousarray(train.features)
    Y = train.targets
    L = Y.shape[1] if n_loads is None else n_loads
    if Y.shape[1] != L:
        raise PipelineError(f"dataset has {Y.shape[1]} targets, expected {L}")
    cm = cluster_model if cluster_model is not None else fit_clusterer(X, clusterer)
    if cm.labels.shape[0] != X.shape[0]:
        raise PipelineError("cluster model labels do not match the training set")
    counts = np.bincount(cm.labels, minlength=cm.k)
    need = min_training_size(regressor)
    small = np.flatnonzero(counts < need)
    if small.size:
        j = int(small[0])
        raise PipelineError(f"cluster {j} has {counts[j]} training samples; the regressor needs at least {need} "
                            f"({small.size} undersized clusters in total)")
    banks = []
    for j in range(cm.k):
        rows = np.flatnonzero(cm.labels == j)
        banks.append(_fit_bank(X[rows], Y[rows], regressor))
    return TrainedPipeline(cm, banks, L, counts, scaler, clusterer, regressor)


def assign_to_cluster(x, p_or_model) -> int:
    cm = p_or_model.cluster_model if isinstance(p_or_model, TrainedPipeline) else p_or_model
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != cm.centroids.shape[1]:
        raise PipelineError(f"expected a feature vector of length {cm.centroids.shape[1]}")
    return int(K.nearest_centroid(x[None, :], cm.centroids)[0][0])


def _bank_predict(bank, X, L):
    if len(bank) == 1 and bank[0].output_width == L:
        return bank[0].predict(X)
    out = np.empty((X.shape[0], L))
    for l, r in enumerate(bank):
        out[:, l] = r.predict(X)[:, 0]
    return out


def predict_sample(x, p: TrainedPipeline) -> PredictionVector:
    c = assign_to_cluster(x, p)
    vals = _bank_predict(p.banks[c], np.asarray(x, dtype=np.float64)[None, :], p.n_loads)[0]
    return PredictionVector(vals, c)


def predict_batch(X, p: TrainedPipeline) -> tuple[np.ndarray, float]:
    """Predict every row; returns (predictions, wall-clock seconds).

    The timing covers cluster assignment and per-cluster regression only.
    """
    X = p._check(X)
    t0 = time.perf_counter()
    labels = K.nearest_centroid(X, p.cluster_model.centroids)[0]
    out = np.empty((X.shape[0], p.n_loads))
    for j in np.unique(labels):
        rows = np.flatnonzero(labels == j)
        out[rows] = _bank_predict(p.banks[j], X[rows], p.n_loads)
    elapsed = time.perf_counter() - t0
    return out, elapsed


def predict_raw(X_raw, p: TrainedPipeline) -> np.ndarray:
    """Apply the stored scaler, then :func:`predict_batch`."""
    if p.scaler is None:
        raise PipelineError("pipeline has no stored scaler")
    return predict_batch(p.scaler.transform(X_raw), p)[0]
