"""Experiment grid over (clusterer, regressor, cluster size) and its report tables.

Every cell draws its seed from (global seed, clusterer id, cluster size), so
results do not depend on execution order or thread count.  Clusterings are
fitted once per (clusterer, k) and shared by all regressors using them.
"""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
import time
import warnings
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .clustering import ClusterModel, ClusteringError, KMeansConfig, OtKMeansConfig, fit_clusterer, silhouette
from .data import (Dataset, SplitSpec, SyntheticConfig, fit_scaler, generate_synthetic, load_csv,
                   split)
from .metrics import MAXIMIZE, MINIMIZE, MetricColumn, RuiTable, groups_by_method, local_rui, r2, rmse, rui
from .metrics import windowed_rui
from .pipeline import PipelineError, predict_batch, train_divide_conquer
from .regressors import GbConfig, KnnConfig, RegressorError, regressor_from_config_dict

RECORD_FIELDS = ("method", "cluster_size", "rmse", "r2", "silhouette", "train_s", "pred_s", "seed", "status",
                 "reason")
DEFAULT_WEIGHTS = (0.3, 0.4, 0.3)
PRED_REPEATS = 3
_GRID_CLUSTERERS = {"kmeans": KMeansConfig, "ot_kmeans": OtKMeansConfig}


class BenchmarkError(RuntimeError):
    pass


# ------------------------------------------------------------------------ config


@dataclass(frozen=True)
class MethodSpec:
    """One clusterer x regressor combination swept over the cluster sizes."""

    clusterer: str
    regressor: dict
    clusterer_params: dict = field(default_factory=dict)
    label: str | None = None

    def __post_init__(self):
        if self.clusterer not in _GRID_CLUSTERERS:
            raise BenchmarkError(f"grid clusterer must be one of {sorted(_GRID_CLUSTERERS)}, got {self.clusterer!r}")
        bad = {"k", "seed"} & set(self.clusterer_params)
        if bad:
            raise BenchmarkError(f"clusterer_params may not set {sorted(bad)}; the grid supplies them")
        object.__setattr__(self, "regressor", dict(self.regressor))
        object.__setattr__(self, "clusterer_params", dict(self.clusterer_params))
        regressor_from_config_dict(self.regressor)  # validate early

    @property
    def regressor_id(self) -> str:
        return regressor_label(self.regressor)

    @property
    def clusterer_id(self) -> str:
        if not self.clusterer_params:
            return self.clusterer
        return self.clusterer + json.dumps(self.clusterer_params, sort_keys=True, separators=(",", ":"))

    @property
    def method_id(self) -> str:
        return self.label or f"{self.clusterer}+{self.regressor_id}"

    def clusterer_config(self, k: int, seed: int):
        return _GRID_CLUSTERERS[self.clusterer](k=k, seed=seed, **self.clusterer_params)

    def regressor_config(self):
        return regressor_from_config_dict(self.regressor)


def regressor_label(d: dict) -> str:
    cfg = regressor_from_config_dict(d)
    if isinstance(cfg, KnnConfig):
        return f"knn{cfg.n_neighbors}"
    if isinstance(cfg, GbConfig):
        return "gb" if cfg.multi_output else "gb_per_load"
    return d["kind"]


def default_methods() -> list[MethodSpec]:
    gb = {"kind": "gb"}
    gbp = {"kind": "gb", "multi_output": False}
    knn = lambda n: {"kind": "knn", "n_neighbors": n}  # noqa: E731
    return [
        MethodSpec("kmeans", gb),
        MethodSpec("kmeans", knn(3)),
        MethodSpec("kmeans", knn(5)),
        MethodSpec("kmeans", knn(9)),
        MethodSpec("ot_kmeans", gb),
        MethodSpec("ot_kmeans", gbp),
        MethodSpec("ot_kmeans", knn(5)),
    ]


@dataclass(frozen=True)
class GridConfig:
    cluster_sizes: tuple = tuple(range(5, 201, 5))
    methods: tuple = field(default_factory=lambda: tuple(default_methods()))
    rui_weights: tuple = DEFAULT_WEIGHTS
    synthetic: SyntheticConfig | None = field(default_factory=SyntheticConfig)
    csv_path: str | None = None
    n_targets: int | None = None
    train_fraction: float = 0.8
    seed: int = 0
    silhouette_sample: int | None = None

    def __post_init__(self):
        sizes = tuple(int(k) for k in self.cluster_sizes)
        if not sizes or sizes[0] < 1 or any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise BenchmarkError("cluster_sizes must be positive and strictly increasing")
        object.__setattr__(self, "cluster_sizes", sizes)
        if not self.methods:
            raise BenchmarkError("at least one method is required")
        object.__setattr__(self, "methods", tuple(self.methods))
        ids = [m.method_id for m in self.methods]
        if len(set(ids)) != len(ids):
            raise BenchmarkError(f"duplicate method ids: {ids}")
        w = tuple(float(x) for x in self.rui_weights)
        if len(w) != 3 or min(w) < 0 or abs(math.fsum(w) - 1.0) > 1e-12:
            raise BenchmarkError("rui_weights must be three nonnegative numbers summing to 1")
        object.__setattr__(self, "rui_weights", w)
        if (self.csv_path is None) == (self.synthetic is None):
            raise BenchmarkError("give exactly one dataset source: synthetic config or csv_path")
        if self.csv_path is not None and not self.n_targets:
            raise BenchmarkError("csv_path needs n_targets")
        if self.seed < 0:
            raise BenchmarkError("seed must be unsigned")

    # JSON ---------------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "cluster_sizes": list(self.cluster_sizes),
            "methods": [
                {"clusterer": m.clusterer, "clusterer_params": m.clusterer_params, "regressor": m.regressor,
                 **({"label": m.label} if m.label else {})}
                for m in self.methods
            ],
            "rui_weights": list(self.rui_weights),
            "dataset": ({"synthetic": asdict(self.synthetic)} if self.synthetic is not None
                        else {"csv": self.csv_path, "n_targets": self.n_targets}),
            "train_fraction": self.train_fraction,
            "seed": self.seed,
            "silhouette_sample": self.silhouette_sample,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridConfig":
        known = {"cluster_sizes", "methods", "rui_weights", "dataset", "train_fraction", "seed", "silhouette_sample"}
        unknown = set(d) - known
        if unknown:
            raise BenchmarkError(f"unknown grid config keys: {sorted(unknown)}")
        kw = {}
        if "cluster_sizes" in d:
            cs = d["cluster_sizes"]
            kw["cluster_sizes"] = range(cs["start"], cs["stop"] + 1, cs["step"]) if isinstance(cs, dict) else cs
        if "methods" in d:
            kw["methods"] = tuple(MethodSpec(m["clusterer"], m["regressor"], m.get("clusterer_params", {}),
                                             m.get("label")) for m in d["methods"])
        for key in ("rui_weights", "train_fraction", "seed", "silhouette_sample"):
            if key in d:
                kw[key] = d[key]
        ds = d.get("dataset")
        if ds is not None:
            if "csv" in ds:
                kw.update(synthetic=None, csv_path=ds["csv"], n_targets=ds.get("n_targets"))
            else:
                kw["synthetic"] = SyntheticConfig.from_dict(ds.get("synthetic", {}))
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> "GridConfig":
        return cls.from_dict(json.loads(text))

    def load_dataset(self) -> Dataset:
        if self.csv_path is not None:
            return load_csv(self.csv_path, self.n_targets)
        return generate_synthetic(self.synthetic)


# ----------------------------------------------------------------------- records


@dataclass(frozen=True)
class ExperimentRecord:
    method: str
    cluster_size: int
    rmse: float | None
    r2: float | None
    silhouette: float | None
    train_s: float | None
    pred_s: float | None
    seed: int
    status: str = "ok"
    reason: str = ""

    def __post_init__(self):
        if self.status not in ("ok", "failed"):
            raise BenchmarkError(f"bad status {self.status!r}")
        if self.status == "ok":
            if self.rmse is None or self.rmse < 0 or self.train_s is None or self.train_s < 0 \
                    or self.pred_s is None or self.pred_s < 0:
                raise BenchmarkError(f"incomplete record for {self.method} k={self.cluster_size}")
        if self.cluster_size == 0 and self.silhouette is not None:
            raise BenchmarkError("baseline records carry no silhouette")

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def is_baseline(self) -> bool:
        return self.cluster_size == 0

    def non_time_fields(self) -> tuple:
        return (self.method, self.cluster_size, self.rmse, self.r2, self.silhouette, self.seed, self.status,
                self.reason)


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def _parse(s: str):
    return None if s == "" else float(s)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_FIELDS)
    for r in records:
        w.writerow([r.method, r.cluster_size, _fmt(r.rmse), _fmt(r.r2), _fmt(r.silhouette), _fmt(r.train_s),
                    _fmt(r.pred_s), r.seed, r.status, r.reason])
    return buf.getvalue()


def records_from_csv(text: str) -> list[ExperimentRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != RECORD_FIELDS:
        raise BenchmarkError(f"records CSV header must be {','.join(RECORD_FIELDS)}")
    out = []
    for n, row in enumerate(rows[1:], start=2):
        if len(row) != len(RECORD_FIELDS):
            raise BenchmarkError(f"records CSV line {n}: expected {len(RECORD_FIELDS)} fields")
        out.append(ExperimentRecord(row[0], int(row[1]), _parse(row[2]), _parse(row[3]), _parse(row[4]),
                                    _parse(row[5]), _parse(row[6]), int(row[7]), row[8], row[9]))
    return out


# -------------------------------------------------------------------------- grid


def cell_seed(global_seed: int, tag: str, k: int) -> int:
    ss = np.random.SeedSequence([global_seed, zlib.crc32(tag.encode()), k])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass
class _Prepared:
    X: np.ndarray
    Y: np.ndarray
    Xt: np.ndarray
    Yt: np.ndarray
    train: Dataset


def _prepare(cfg: GridConfig) -> _Prepared:
    ds = cfg.load_dataset()
    tr, te = split(ds, SplitSpec(cfg.train_fraction, cfg.seed))
    sc = fit_scaler(tr)
    X = np.ascontiguousarray(sc.transform(tr.features))
    Xt = np.ascontiguousarray(sc.transform(te.features))
    return _Prepared(X, tr.targets, Xt, te.targets, tr.with_features(X))


def _time_predict(X, pipe):
    times, out = [], None
    for _ in range(PRED_REPEATS):
        out, t = predict_batch(X, pipe)
        times.append(t)
    return out, statistics.median(times)


def _clustering_job(prep: _Prepared, spec: MethodSpec, k: int, cfg: GridConfig):
    seed = cell_seed(cfg.seed, spec.clusterer_id, k)
    try:
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            cm = fit_clusterer(prep.X, spec.clusterer_config(k, seed))
        fit_s = time.perf_counter() - t0
        sil = silhouette(prep.X, cm.labels, cfg.silhouette_sample, seed) if cm.k > 1 else None
        return {"model": cm, "fit_s": fit_s, "silhouette": sil, "seed": seed, "error": None}
    except (ClusteringError, ValueError) as e:
        return {"model": None, "seed": seed, "error": f"clustering: {e}"}


def _regression_cell(prep: _Prepared, spec: MethodSpec, k: int, clustering: dict) -> ExperimentRecord:
    seed = clustering["seed"]
    if clustering["error"] is not None:
        return ExperimentRecord(spec.method_id, k, None, None, None, None, None, seed, "failed",
                                clustering["error"])
    try:
        t0 = time.perf_counter()
        pipe = train_divide_conquer(prep.train, None, spec.regressor_config(),
                                    cluster_model=clustering["model"])
        train_s = clustering["fit_s"] + (time.perf_counter() - t0)
        pred, pred_s = _time_predict(prep.Xt, pipe)
    except (PipelineError, RegressorError) as e:
        return ExperimentRecord(spec.method_id, k, None, None, clustering["silhouette"], None, None, seed,
                                "failed", str(e))
    return ExperimentRecord(spec.method_id, k, rmse(prep.Yt, pred), r2(prep.Yt, pred), clustering["silhouette"],
                            train_s, pred_s, seed)


def _baseline_cell(prep: _Prepared, reg: dict, cfg: GridConfig) -> ExperimentRecord:
    label = regressor_label(reg)
    seed = cell_seed(cfg.seed, label, 0)
    try:
        t0 = time.perf_counter()
        pipe = train_divide_conquer(prep.train, None, regressor_from_config_dict(reg),
                                    cluster_model=_single_cluster(prep.X))
        train_s = time.perf_counter() - t0
        pred, pred_s = _time_predict(prep.Xt, pipe)
    except (PipelineError, RegressorError) as e:
        return ExperimentRecord(label, 0, None, None, None, None, None, seed, "failed", str(e))
    return ExperimentRecord(label, 0, rmse(prep.Yt, pred), r2(prep.Yt, pred), None, train_s, pred_s, seed)


def _single_cluster(X):
    return ClusterModel(X.mean(axis=0, keepdims=True), np.zeros(X.shape[0], dtype=np.int64), "kmeans",
                        {"k": 1})


def run_grid(cfg: GridConfig, threads: int = 1, progress=None) -> list[ExperimentRecord]:
    """Run baselines plus every (method, cluster size) cell.

    Records come back in a fixed order: one baseline per distinct regressor,
    then each method's sweep over ``cluster_sizes``.  Failed cells are kept as
    records with ``status == "failed"``.
    """
    if threads < 1:
        raise BenchmarkError("threads must be at least 1")
    prep = _prepare(cfg)
    baselines = {}
    for m in cfg.methods:
        baselines.setdefault(m.regressor_id, m.regressor)
    clusterings = {}
    for m in cfg.methods:
        for k in cfg.cluster_sizes:
            clusterings.setdefault((m.clusterer_id, k), (m, k))

    def note(msg):
        if progress is not None:
            progress(msg)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        base_futs = [pool.submit(_baseline_cell, prep, reg, cfg) for reg in baselines.values()]
        clus_futs = {key: pool.submit(_clustering_job, prep, m, k, cfg) for key, (m, k) in clusterings.items()}
        clus = {}
        for key, f in clus_futs.items():
            clus[key] = f.result()
            note(f"clustered {key[0]} k={key[1]}")
        cell_futs = [pool.submit(_regression_cell, prep, m, k, clus[(m.clusterer_id, k)])
                     for m in cfg.methods for k in cfg.cluster_sizes]
        records = [f.result() for f in base_futs]
        for f in cell_futs:
            r = f.result()
            note(f"{r.method} k={r.cluster_size} {r.status}")
            records.append(r)
    return records


# ------------------------------------------------------------------------ report

RUI_COLUMNS = (("silhouette", MAXIMIZE), ("rmse", MINIMIZE), ("pred_s", MINIMIZE))
TABLE1_FIELDS = ("method", "rmse", "cluster_size", "r2", "silhouette", "train_s", "pred_s")


def rui_table(records, weights=DEFAULT_WEIGHTS) -> RuiTable:
    """Successful clustered records as a RuiTable; baselines have no silhouette and are left out."""
    rows = [r for r in records if r.ok and not r.is_baseline and r.silhouette is not None]
    if not rows:
        raise BenchmarkError("no successful clustered records to rank")
    cols = tuple(MetricColumn(name, d, np.array([getattr(r, name) for r in rows])) for name, d in RUI_COLUMNS)
    return RuiTable(cols, np.array(weights), tuple((r.method, r.cluster_size) for r in rows))


def _best(rows):
    # lowest RMSE, ties to the smaller cluster size
    return min(rows, key=lambda r: (r.rmse, r.cluster_size))


def best_rmse_table(records) -> list[dict]:
    """Best-RMSE configuration per method, grouped under each regressor's baseline.

    Each block ends with a "Maximum difference" row: for every column the
    clustered entry furthest from the baseline, relative for RMSE and absolute
    otherwise.
    """
    ok = [r for r in records if r.ok]
    by_method: dict = {}
    for r in ok:
        by_method.setdefault(r.method, []).append(r)
    blocks: dict = {}
    for method, rows in by_method.items():
        if rows[0].is_baseline:
            continue
        reg = method.split("+", 1)[1] if "+" in method else method
        blocks.setdefault(reg, []).append(_best(rows))
    out = []
    for reg, clustered in blocks.items():
        base_rows = by_method.get(reg)
        base = _best(base_rows) if base_rows and base_rows[0].is_baseline else None
        if base is not None:
            out.append({"kind": "baseline", **{f: getattr(base, f) for f in TABLE1_FIELDS}})
        for r in clustered:
            out.append({"kind": "clustered", **{f: getattr(r, f) for f in TABLE1_FIELDS}})
        if base is None:
            continue
        diff = {"kind": "max_diff", "method": f"Maximum difference ({reg})", "cluster_size": None,
                "silhouette": None}
        diff["rmse"] = _max_abs([(r.rmse - base.rmse) / base.rmse for r in clustered])
        for f in ("r2", "train_s", "pred_s"):
            diff[f] = _max_abs([getattr(r, f) - getattr(base, f) for r in clustered])
        out.append(diff)
    return out


def _max_abs(vals):
    # first of equal magnitudes wins, keeping its sign
    best = vals[0]
    for v in vals[1:]:
        if abs(v) > abs(best):
            best = v
    return best


def rui_summary(records, weights=DEFAULT_WEIGHTS) -> list[dict]:
    """Per method: argmax cluster size and max of local RUI, plus the same for the global scores."""
    t = rui_table(records, weights)
    groups = groups_by_method(t)
    g = rui(t)
    out = []
    for (method, rows), loc, win in zip(groups.items(), local_rui(t, groups), windowed_rui(t, groups)):
        i = loc.best_row
        out.append({
            "method": method,
            "rmse": float(t.columns[1].values[i]),
            "silhouette": float(t.columns[0].values[i]),
            "pred_s": float(t.columns[2].values[i]),
            "local_best_cluster_size": loc.best_meta[1],
            "local_max_rui": loc.best_score,
            "global_best_cluster_size": win.best_meta[1],
            "global_max_rui": win.best_score,
            "is_global_best": bool(g.best_row in rows and win.best_row == g.best_row),
        })
    return out


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if row.get(h) is None else (repr(row[h]) if isinstance(row[h], float) else row[h])
                     for h in header])
    return buf.getvalue()


def _table1_text(rows, contended: bool) -> str:
    def num(v, spec):
        return "-" if v is None else format(v, spec)

    lines = ["| Method | RMSE | Cluster. | R2 | Sil. | Train. [s] | Pred. [s] |",
             "|---|---|---|---|---|---|---|"]
    for r in rows:
        if r["kind"] == "max_diff":
            lines.append(f"| {r['method']} | {r['rmse'] * 100:+.0f}% | - | {r['r2']:+.2f} | - | "
                         f"{r['train_s']:+.2f} | {r['pred_s']:+.2f} |")
        else:
            name = r["method"] + (" (baseline)" if r["kind"] == "baseline" else "")
            cs = "-" if r["kind"] == "baseline" else str(r["cluster_size"])
            lines.append(f"| {name} | {num(r['rmse'], '.2f')} | {cs} | {num(r['r2'], '.2f')} | "
                         f"{num(r['silhouette'], '.2f')} | {num(r['train_s'], '.2f')} | {num(r['pred_s'], '.2f')} |")
    if contended:
        lines.append("")
        lines.append("Time columns were measured with concurrent cells and are contended.")
    return "\n".join(lines) + "\n"


def _table2_text(rows) -> str:
    lines = ["| Method | argmax RUI' {RMSE, Sil., Pred.} | cluster size | max RUI' | global cluster size "
             "| global max RUI |", "|---|---|---|---|---|---|"]
    for r in rows:
        mark = " *" if r["is_global_best"] else ""
        lines.append(f"| {r['method']} | {{{r['rmse']:.2f}, {r['silhouette']:.2f}, {r['pred_s']:.2f}}} | "
                     f"{r['local_best_cluster_size']} | {r['local_max_rui']:.3f} | "
                     f"{r['global_best_cluster_size']} | {r['global_max_rui']:.3f}{mark} |")
    return "\n".join(lines) + "\n"


CURVE_METRICS = ("rmse", "r2", "silhouette", "train_s", "pred_s", "rui_global", "rui_local")


def curves(records, weights=DEFAULT_WEIGHTS) -> list[dict]:
    """One row per successful record with its metrics and RUI scores (none for baselines)."""
    scores = {}
    try:
        t = rui_table(records, weights)
        g = rui(t)
        for i, key in enumerate(t.meta):
            scores[key] = [float(g.scores[i]), None]
        for res in local_rui(t, groups_by_method(t)):
            for pos, row in enumerate(res.rows):
                scores[t.meta[row]][1] = float(res.scores[pos])
    except BenchmarkError:
        pass
    out = []
    for r in records:
        if not r.ok:
            continue
        rg, rl = scores.get((r.method, r.cluster_size), (None, None))
        out.append({"method": r.method, "cluster_size": r.cluster_size, "rmse": r.rmse, "r2": r.r2,
                    "silhouette": r.silhouette, "train_s": r.train_s, "pred_s": r.pred_s,
                    "rui_global": rg, "rui_local": rl})
    return out


_PALETTE = ("#b2182b", "#d6604d", "#f4a582", "#92c5de", "#4393c3", "#2166ac", "#1a9850", "#762a83", "#e08214",
            "#4d4d4d")


def svg_line_chart(series: dict, title: str, ylabel: str, width: int = 640, height: int = 400) -> str:
    """Minimal line chart; ``series`` maps a name to (xs, ys) lists."""
    pts = [(x, y) for xs, ys in series.values() for x, y in zip(xs, ys) if y is not None]
    ml, mr, mt, mb = 60, 170, 30, 40
    pw, ph = width - ml - mr, height - mt - mb
    if pts:
        x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
        y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    else:
        x0 = y0 = 0.0
        x1 = y1 = 1.0
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def sx(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return mt + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>',
           f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{_esc(title)}</text>',
           f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
           f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>']
    for i in range(5):
        yv = y0 + (y1 - y0) * i / 4
        xv = x0 + (x1 - x0) * i / 4
        out.append(f'<text x="{ml - 4}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.4g}</text>')
        out.append(f'<text x="{sx(xv):.1f}" y="{mt + ph + 15}" text-anchor="middle">{xv:.4g}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 5}" text-anchor="middle">cluster size</text>')
    out.append(f'<text x="14" y="{mt + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {mt + ph / 2:.1f})">{_esc(ylabel)}</text>')
    for j, (name, (xs, ys)) in enumerate(series.items()):
        color = _PALETTE[j % len(_PALETTE)]
        seg = [(sx(x), sy(y)) for x, y in zip(xs, ys) if y is not None]
        if len(seg) > 1:
            path = " ".join(f"{a:.1f},{b:.1f}" for a, b in seg)
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for a, b in seg:
            out.append(f'<circle cx="{a:.1f}" cy="{b:.1f}" r="2" fill="{color}"/>')
        ly = mt + 14 * j + 8
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 25}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 30}" y="{ly + 4}">{_esc(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def report(records, rui_weights=DEFAULT_WEIGHTS, contended: bool = False) -> dict:
    """Build the report bundle: file name -> text.  A pure function of its arguments."""
    records = list(records)
    if not any(r.ok for r in records):
        raise BenchmarkError("every record failed; nothing to report")
    bundle = {"records.csv": records_to_csv(records)}
    t1 = best_rmse_table(records)
    bundle["table1_best_rmse.csv"] = _csv_text(("kind",) + TABLE1_FIELDS, t1)
    bundle["table1_best_rmse.md"] = _table1_text(t1, contended)
    try:
        t2 = rui_summary(records, rui_weights)
    except BenchmarkError:
        t2 = []
    bundle["table2_rui.csv"] = _csv_text(
        ("method", "rmse", "silhouette", "pred_s", "local_best_cluster_size", "local_max_rui",
         "global_best_cluster_size", "global_max_rui", "is_global_best"), t2)
    bundle["table2_rui.md"] = _table2_text(t2)
    cv = curves(records, rui_weights)
    bundle["curves.csv"] = _csv_text(("method", "cluster_size") + CURVE_METRICS, cv)
    failed = [r for r in records if not r.ok]
    bundle["failed_cells.csv"] = _csv_text(("method", "cluster_size", "reason"),
                                           [{"method": r.method, "cluster_size": r.cluster_size, "reason": r.reason}
                                            for r in failed])
    base = {r.method: r for r in records if r.ok and r.is_baseline}
    for metric in CURVE_METRICS:
        series = {}
        for row in cv:
            if row["cluster_size"] == 0:
                continue
            xs, ys = series.setdefault(row["method"], ([], []))
            xs.append(row["cluster_size"])
            ys.append(row[metric])
        if metric in ("rmse", "r2", "train_s", "pred_s"):
            # cluster size 0 is the method's baseline
            for method, (xs, ys) in series.items():
                b = base.get(method.split("+", 1)[-1])
                if b is not None:
                    xs.insert(0, 0)
                    ys.insert(0, getattr(b, metric))
        bundle[f"curve_{metric}.svg"] = svg_line_chart(series, f"{metric} per cluster size", metric)
    bundle["report.json"] = json.dumps({"rui_weights": list(rui_weights), "contended_timing": contended,
                                        "n_records": len(records), "n_failed": len(failed)}, indent=2) + "\n"
    return bundle


def write_report(bundle: dict, out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, text in bundle.items():
        (out_dir / name).write_text(text)
    return out_dir
