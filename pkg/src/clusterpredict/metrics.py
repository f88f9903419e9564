"""Accuracy metrics and the Real-world Unified Index (RUI).

RUI turns a table of per-experiment metrics into one score per experiment:
each metric column is min-max normalised so that higher is better, then the
columns are combined with nonnegative weights summing to one.  The global
variant normalises over the whole table, the local variant within each group
(typically one method's sweep over cluster sizes).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAXIMIZE = "maximize"
MINIMIZE = "minimize"
DIRECTIONS = (MAXIMIZE, MINIMIZE)
WEIGHT_TOL = 1e-12


class MetricError(ValueError):
    pass


def _pair(Y_true, Y_pred):
    Y_true = np.asarray(Y_true, dtype=np.float64)
    Y_pred = np.asarray(Y_pred, dtype=np.float64)
    if Y_true.ndim == 1:
        Y_true = Y_true[:, None]
    if Y_pred.ndim == 1:
        Y_pred = Y_pred[:, None]
    if Y_true.shape != Y_pred.shape:
        raise MetricError(f"shape mismatch: {Y_true.shape} vs {Y_pred.shape}")
    if Y_true.size == 0:
        raise MetricError("empty input")
    return Y_true, Y_pred


def rmse(Y_true, Y_pred) -> float:
    """Root mean squared error pooled over every entry."""
    Y_true, Y_pred = _pair(Y_true, Y_pred)
    return float(np.sqrt(np.mean((Y_true - Y_pred) ** 2)))


def rmse_per_load(Y_true, Y_pred) -> np.ndarray:
    Y_true, Y_pred = _pair(Y_true, Y_pred)
    return np.sqrt(np.mean((Y_true - Y_pred) ** 2, axis=0))


def r2(Y_true, Y_pred) -> float:
    """Pooled coefficient of determination: 1 - SS_res / SS_tot.

    SS_tot is taken about each column's mean and summed over columns, so
    outputs contribute in proportion to their variance.
    """
    Y_true, Y_pred = _pair(Y_true, Y_pred)
    ss_tot = float(np.sum((Y_true - Y_true.mean(axis=0)) ** 2))
    if not ss_tot > 0:
        raise MetricError("R^2 is undefined for constant targets")
    ss_res = float(np.sum((Y_true - Y_pred) ** 2))
    return 1.0 - ss_res / ss_tot


# ---------------------------------------------------------------------------- RUI


@dataclass(frozen=True)
class MetricColumn:
    name: str
    direction: str
    values: np.ndarray

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise MetricError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size < 1:
            raise MetricError(f"column {self.name!r} must be a nonempty vector")
        if not np.isfinite(v).all():
            raise MetricError(f"column {self.name!r} has non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def take(self, rows) -> "MetricColumn":
        return MetricColumn(self.name, self.direction, self.values[np.asarray(rows, dtype=np.int64)])


def normalize_column(c: MetricColumn) -> np.ndarray:
    """Map a column onto [0, 1] with 1 the best value; constant columns map to 0.5."""
    v = c.values
    lo, hi = v.min(), v.max()
    span = hi - lo
    if not span > 0:
        return np.full(v.shape, 0.5)
    if c.direction == MAXIMIZE:
        out = (v - lo) / span
    else:
        out = (hi - v) / span
    return out


@dataclass(frozen=True)
class RuiTable:
    """Metric columns over m experiments plus per-metric weights.

    ``meta`` holds one (method, cluster_size) pair per experiment row.
    """

    columns: tuple
    weights: np.ndarray
    meta: tuple = ()

    def __post_init__(self):
        cols = tuple(self.columns)
        if not cols:
            raise MetricError("RuiTable needs at least one column")
        m = cols[0].values.shape[0]
        for c in cols:
            if c.values.shape[0] != m:
                raise MetricError(f"column {c.name!r} has {c.values.shape[0]} rows, expected {m}")
        w = np.array(self.weights, dtype=np.float64)
        if w.shape != (len(cols),):
            raise MetricError(f"expected {len(cols)} weights, got {w.shape}")
        if not np.isfinite(w).all() or (w < 0).any():
            raise MetricError("weights must be finite and nonnegative")
        if abs(math.fsum(w) - 1.0) > WEIGHT_TOL:
            raise MetricError(f"weights must sum to 1, got {math.fsum(w)!r}")
        w.setflags(write=False)
        meta = tuple((str(a), int(b)) for a, b in self.meta) if self.meta else tuple(("", 0) for _ in range(m))
        if len(meta) != m:
            raise MetricError(f"meta has {len(meta)} rows, expected {m}")
        object.__setattr__(self, "columns", cols)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "meta", meta)

    @property
    def m(self) -> int:
        return self.columns[0].values.shape[0]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def normalized(self) -> np.ndarray:
        return np.column_stack([normalize_column(c) for c in self.columns])

    def take(self, rows) -> "RuiTable":
        rows = np.asarray(rows, dtype=np.int64)
        return RuiTable(tuple(c.take(rows) for c in self.columns), self.weights,
                        tuple(self.meta[i] for i in rows))

    # persistence --------------------------------------------------------------
    def to_csv(self, path) -> Path:
        """Write ``path`` (metrics) and ``path`` + ``.json`` (directions and weights)."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "cluster_size", *self.names])
            for i, (method, size) in enumerate(self.meta):
                w.writerow([method, size, *(repr(float(c.values[i])) for c in self.columns)])
        sidecar = {
            "columns": [{"name": c.name, "direction": c.direction} for c in self.columns],
            "weights": [float(x) for x in self.weights],
        }
        sidecar_path(path).write_text(json.dumps(sidecar, indent=2))
        return path

    @classmethod
    def from_csv(cls, path) -> "RuiTable":
        path = Path(path)
        sidecar = json.loads(sidecar_path(path).read_text())
        names = [c["name"] for c in sidecar["columns"]]
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][:2] != ["method", "cluster_size"] or rows[0][2:] != names:
            raise MetricError(f"{path}: header does not match its sidecar")
        body = rows[1:]
        meta = tuple((r[0], int(r[1])) for r in body)
        vals = np.array([[float(x) for x in r[2:]] for r in body], dtype=np.float64).reshape(len(body), len(names))
        cols = tuple(MetricColumn(c["name"], c["direction"], vals[:, j]) for j, c in enumerate(sidecar["columns"]))
        return cls(cols, np.array(sidecar["weights"]), meta)


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


@dataclass(frozen=True)
class RuiResult:
    """Scores for a set of rows; ``best_index`` indexes ``scores``, ``rows`` maps back to the table."""

    scores: np.ndarray
    best_index: int
    best_meta: tuple
    rows: np.ndarray = field(default=None)

    @property
    def best_score(self) -> float:
        return float(self.scores[self.best_index])

    @property
    def best_row(self) -> int:
        return int(self.rows[self.best_index])


def _weighted(N: np.ndarray, w: np.ndarray) -> np.ndarray:
    # fixed left-to-right summation order, independent of BLAS
    s = np.zeros(N.shape[0])
    for j in range(N.shape[1]):
        s += w[j] * N[:, j]
    # rounding can push a convex combination of [0, 1] values a hair outside
    return np.clip(s, 0.0, 1.0)


def rui(t: RuiTable) -> RuiResult:
    """Global RUI over every experiment in the table."""
    scores = _weighted(t.normalized(), t.weights)
    best = int(np.argmax(scores))  # first maximum wins ties
    return RuiResult(scores, best, t.meta[best], np.arange(t.m))


def groups_by_method(t: RuiTable) -> dict:
    """Row indices per method, in order of first appearance."""
    out: dict = {}
    for i, (method, _) in enumerate(t.meta):
        out.setdefault(method, []).append(i)
    return {k: np.array(v, dtype=np.int64) for k, v in out.items()}


def windows(m: int, width: int) -> list[np.ndarray]:
    """Consecutive row blocks [width*l, width*l + width); the last one may be short."""
    if width < 1:
        raise MetricError("window width must be positive")
    return [np.arange(s, min(s + width, m)) for s in range(0, m, width)]


def local_rui(t: RuiTable, groups) -> list[RuiResult]:
    """RUI recomputed inside each group with group-local min/max.

    ``groups`` is a sequence (or dict) of row-index arrays that must partition
    the table's rows.
    """
    if isinstance(groups, dict):
        groups = list(groups.values())
    seen = np.zeros(t.m, dtype=np.int64)
    for g in groups:
        g = np.asarray(g, dtype=np.int64)
        if g.size == 0:
            raise MetricError("empty group")
        if g.min() < 0 or g.max() >= t.m:
            raise MetricError("group index out of range")
        np.add.at(seen, g, 1)
    if not (seen == 1).all():
        raise MetricError("groups must partition the table rows")
    results = []
    for g in groups:
        g = np.asarray(g, dtype=np.int64)
        sub = t.take(g)
        r = rui(sub)
        results.append(RuiResult(r.scores, r.best_index, r.best_meta, g))
    return results


def windowed_rui(t: RuiTable, groups) -> list[RuiResult]:
    """Global RUI scores restricted to each group, without renormalising.

    This is the block-of-the-global-vector reading of a per-method index, kept
    next to :func:`local_rui` so both can be reported.
    """
    if isinstance(groups, dict):
        groups = list(groups.values())
    g_all = rui(t).scores
    out = []
    for g in groups:
        g = np.asarray(g, dtype=np.int64)
        if g.size == 0:
            raise MetricError("empty group")
        s = g_all[g]
        best = int(np.argmax(s))
        out.append(RuiResult(s, best, t.meta[g[best]], g))
    return out
