"""Datasets, CSV ingestion, synthetic generation, splitting and scaling."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


def _frozen(a, ndim):
    a = np.array(a, dtype=np.float64)
    if a.ndim == 1 and ndim == 2:
        a = a.reshape(-1, 1)
    if a.ndim != ndim:
        raise DataError(f"expected a {ndim}-d array, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Dataset:
    """Feature matrix ``features`` (m x d) paired with ``targets`` (m x L)."""

    features: np.ndarray
    targets: np.ndarray
    feature_names: tuple = ()
    target_names: tuple = ()

    def __post_init__(self):
        X = _frozen(self.features, 2)
        Y = _frozen(self.targets, 2)
        if X.shape[0] != Y.shape[0]:
            raise DataError(f"row mismatch: {X.shape[0]} features vs {Y.shape[0]} targets")
        if X.shape[0] < 1 or X.shape[1] < 1 or Y.shape[1] < 1:
            raise DataError(f"empty dataset: features {X.shape}, targets {Y.shape}")
        if not (np.isfinite(X).all() and np.isfinite(Y).all()):
            raise DataError("dataset contains non-finite values")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", Y)
        fn = tuple(self.feature_names) or tuple(f"x{i}" for i in range(X.shape[1]))
        tn = tuple(self.target_names) or tuple(f"y{i}" for i in range(Y.shape[1]))
        if len(fn) != X.shape[1] or len(tn) != Y.shape[1]:
            raise DataError("name lists do not match matrix widths")
        object.__setattr__(self, "feature_names", fn)
        object.__setattr__(self, "target_names", tn)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_targets(self) -> int:
        return self.targets.shape[1]

    def take(self, rows) -> "Dataset":
        return Dataset(self.features[rows], self.targets[rows], self.feature_names, self.target_names)

    def with_features(self, X) -> "Dataset":
        return Dataset(X, self.targets, self.feature_names, self.target_names)


# --------------------------------------------------------------------------- CSV


def load_csv(path, n_targets: int) -> Dataset:
    """Read a headed CSV file; the trailing ``n_targets`` columns become targets."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        ncol = len(header)
        if n_targets < 1 or n_targets >= ncol:
            raise DataError(f"{path}: n_targets={n_targets} invalid for {ncol} columns")
        rows = []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != ncol:
                raise DataError(f"{path}:{line}: expected {ncol} fields, got {len(row)}")
            try:
                vals = [float(v) for v in row]
            except ValueError:
                raise DataError(f"{path}:{line}: non-numeric field") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}:{line}: non-finite value")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    a = np.array(rows, dtype=np.float64)
    d = ncol - n_targets
    return Dataset(a[:, :d], a[:, d:], tuple(header[:d]), tuple(header[d:]))


def save_csv(ds: Dataset, path) -> None:
    # repr() is the shortest string that parses back to the same double
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(ds.feature_names) + list(ds.target_names))
        for x, y in zip(ds.features.tolist(), ds.targets.tolist()):
            w.writerow([repr(v) for v in x] + [repr(v) for v in y])


# --------------------------------------------------------------------- synthetic


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters of the mixture-of-components synthetic load dataset.

    Loads are drawn uniformly from ``load_range`` (ohms); each sample belongs to
    one of ``n_components`` components with its own affine map from a bounded
    nonlinear embedding of the loads to the ``d`` features.  Components are
    stacked ``spacing`` apart along the feature-space diagonal, so they are
    separated obliquely to every feature axis.
    """

    n_samples: int = 20_000
    n_components: int = 4
    d: int = 4
    L: int = 3
    noise_std: float = 0.005
    load_range: tuple = (0.0, 1000.0)
    seed: int = 0
    spacing: float = 0.4

    def __post_init__(self):
        object.__setattr__(self, "load_range", tuple(float(v) for v in self.load_range))
        if self.n_samples < 1 or self.n_components < 1 or self.d < 1 or self.L < 1:
            raise DataError("n_samples, n_components, d and L must be positive")
        if self.n_components > self.n_samples:
            raise DataError("n_components must not exceed n_samples")
        if self.noise_std < 0:
            raise DataError("noise_std must be nonnegative")
        if not (self.spacing >= 0 and math.isfinite(self.spacing)):
            raise DataError("spacing must be a finite nonnegative number")
        lo, hi = self.load_range
        if not lo < hi:
            raise DataError(f"load_range low must be < high, got {self.load_range}")
        if self.seed < 0:
            raise DataError("seed must be unsigned")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise DataError(f"unknown SyntheticConfig keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "SyntheticConfig":
        return cls.from_dict(json.loads(text))


def _embed(u: np.ndarray) -> np.ndarray:
    """Monotone bounded map [0, 1] -> [-0.5, 0.5]: linear, sine and rational terms."""
    t = 2.0 * u - 1.0
    return 0.5 * (0.75 * t + 0.15 * np.sin(np.pi * t) + 0.5 * t / (1.0 + np.abs(t)))


def _rotation(rng, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    return q * np.sign(np.diag(r))


def _component_maps(cfg: SyntheticConfig):
    """Per-component (A_c, b_c) drawn from the seed.

    Every A_c maps the load embedding isometrically into the same subspace
    orthogonal to the diagonal direction ``n``; b_c = c * spacing * n.  The
    components therefore form parallel sheets with different in-sheet maps.
    """
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(2)[0])
    n = np.full(cfg.d, 1.0 / np.sqrt(cfg.d))
    if cfg.d > 1:
        # orthonormal basis of the complement of n
        basis = np.linalg.qr(np.column_stack([n, rng.normal(size=(cfg.d, cfg.d - 1))]))[0][:, 1:]
    else:
        basis = np.ones((1, 1))
    r = basis.shape[1]
    A = np.empty((cfg.n_components, cfg.d, cfg.L))
    for c in range(cfg.n_components):
        rot = _rotation(rng, max(r, cfg.L))[:r, :cfg.L]
        A[c] = basis @ rot
    b = np.arange(cfg.n_components)[:, None] * cfg.spacing * n[None, :]
    return A, b


def generate_synthetic(cfg: SyntheticConfig) -> Dataset:
    """Draw a deterministic synthetic dataset: features = A_c g(y) + b_c + noise."""
    A, b = _component_maps(cfg)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(2)[1])
    comp = rng.integers(cfg.n_components, size=cfg.n_samples)
    lo, hi = cfg.load_range
    Y = rng.uniform(lo, hi, size=(cfg.n_samples, cfg.L))
    noise = rng.normal(size=(cfg.n_samples, cfg.d)) * cfg.noise_std

    G = _embed((Y - lo) / (hi - lo))
    X = np.einsum("ndp,np->nd", A[comp], G) + b[comp] + noise
    return Dataset(
        X,
        Y,
        tuple(f"s{i}" for i in range(cfg.d)),
        tuple(f"load{i}" for i in range(cfg.L)),
    )


# ------------------------------------------------------------------------- split


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError("train_fraction must lie in (0, 1)")


def split(ds: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset]:
    """Shuffle rows with ``spec.seed`` and cut into train/test parts."""
    m = ds.n_samples
    if m < 2:
        raise DataError("need at least 2 rows to split")
    n_train = int(math.floor(m * spec.train_fraction))
    if n_train == 0 or n_train == m:
        raise DataError(f"train_fraction={spec.train_fraction} leaves an empty partition for m={m}")
    perm = np.random.default_rng(spec.seed).permutation(m)
    return ds.take(perm[:n_train]), ds.take(perm[n_train:])


# ------------------------------------------------------------------------ scaler


@dataclass(frozen=True)
class StandardScaler:
    """Per-feature z-score with population standard deviation."""

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "means", _frozen(self.means, 1))
        object.__setattr__(self, "stds", _frozen(self.stds, 1))
        if self.means.shape != self.stds.shape:
            raise DataError("means/stds length mismatch")
        if not (self.stds > 0).all():
            raise DataError("scaler stds must be positive")

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.means.shape[0]:
            raise DataError(f"expected {self.means.shape[0]} features, got shape {X.shape}")
        return (X - self.means) / self.stds

    def inverse_transform(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        return Z * self.stds + self.means

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StandardScaler":
        return cls(np.array(d["means"]), np.array(d["stds"]))


def fit_scaler(train: Dataset) -> StandardScaler:
    X = train.features
    means = X.mean(axis=0)
    stds = X.std(axis=0)
    bad = np.flatnonzero(~(stds > 0))
    if bad.size:
        names = [train.feature_names[i] for i in bad]
        raise DataError(f"zero-variance feature(s): {names}")
    return StandardScaler(means, stds)


def apply_scaler(sc: StandardScaler, ds: Dataset) -> Dataset:
    return ds.with_features(sc.transform(ds.features))
