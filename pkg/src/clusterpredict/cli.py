"""Command-line interface: generate, train, predict, grid, rui.

Exit status is 0 on success, 1 on usage errors (bad flags, unreadable or
invalid config) and 2 when the requested work fails at runtime.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .benchmark import BenchmarkError, GridConfig, records_from_csv, report, run_grid, write_report
from .benchmark import DEFAULT_WEIGHTS
from .clustering import ClusteringError, clusterer_from_dict
from .data import DataError, Dataset, SyntheticConfig, apply_scaler, fit_scaler, generate_synthetic, load_csv
from .data import save_csv
from .metrics import MAXIMIZE, MINIMIZE, MetricColumn, MetricError, RuiTable, rui
from .pipeline import PipelineError, TrainedPipeline, predict_raw, train_divide_conquer
from .regressors import RegressorError, regressor_from_config_dict


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _read_json(path):
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config {path}: {e}") from None


def _weights(text):
    try:
        w = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"weights must be comma-separated numbers, got {text!r}") from None
    return w


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="clusterpredict", description="Cluster-then-predict regression benchmark.")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--out-dir", default=".", help="directory for outputs (default: current)")
    common.add_argument("--threads", type=int, default=1, help="concurrent grid cells (default 1)")
    common.add_argument("--subsample-silhouette", type=int, metavar="N",
                        help="compute silhouette on N seeded training rows")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", parents=[common], help="write a synthetic dataset CSV")
    g.add_argument("--out", default="data.csv", help="output CSV (relative to --out-dir)")

    t = sub.add_parser("train", parents=[common], help="train and save a pipeline")
    t.add_argument("--data", required=True, help="training CSV")
    t.add_argument("--n-targets", type=int, default=3)
    t.add_argument("--model", default="model", help="pipeline directory (relative to --out-dir)")

    pr = sub.add_parser("predict", parents=[common], help="apply a saved pipeline to a CSV")
    pr.add_argument("--model", required=True, help="pipeline directory")
    pr.add_argument("--data", required=True, help="CSV with feature columns (targets optional)")
    pr.add_argument("--n-targets", type=int, default=0, help="trailing target columns to ignore")
    pr.add_argument("--out", default="predictions.csv", help="output CSV (relative to --out-dir)")

    gr = sub.add_parser("grid", parents=[common], help="run the experiment grid and write the report")
    gr.add_argument("--data", help="dataset CSV instead of the synthetic generator")
    gr.add_argument("--n-targets", type=int, default=3)

    r = sub.add_parser("rui", parents=[common], help="rank the experiments of a records CSV")
    r.add_argument("--metrics", required=True, help="records CSV written by `grid`")
    r.add_argument("--weights", type=_weights, default=DEFAULT_WEIGHTS,
                   help="silhouette,rmse,pred_s weights (default 0.3,0.4,0.3)")
    r.add_argument("--top", type=int, default=10, help="rows to print")
    return p


# ---------------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    d = _read_json(args.config)
    if args.seed is not None:
        d["seed"] = args.seed
    cfg = SyntheticConfig.from_dict(d)
    out = Path(args.out_dir) / args.out
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(generate_synthetic(cfg), out)
    print(out)
    return 0


def cmd_train(args) -> int:
    d = _read_json(args.config)
    try:
        clusterer = clusterer_from_dict(d.get("clusterer", {"method": "kmeans", "k": 5}))
        regressor = regressor_from_config_dict(d.get("regressor", {"kind": "knn"}))
    except (ClusteringError, RegressorError, TypeError) as e:
        raise UsageError(f"invalid train config: {e}") from None
    if args.seed is not None and hasattr(clusterer, "seed"):
        clusterer = replace(clusterer, seed=args.seed)
    ds = load_csv(args.data, args.n_targets)
    sc = fit_scaler(ds)
    pipe = train_divide_conquer(apply_scaler(sc, ds), clusterer, regressor, scaler=sc)
    out = pipe.save(Path(args.out_dir) / args.model)
    print(out)
    return 0


def cmd_predict(args) -> int:
    pipe = TrainedPipeline.load(args.model)
    if args.n_targets:
        X = load_csv(args.data, args.n_targets).features
    else:
        X = _load_features(args.data)
    Y = predict_raw(X, pipe)
    out = Path(args.out_dir) / args.out
    out.parent.mkdir(parents=True, exist_ok=True)
    names = tuple(f"load{i}" for i in range(Y.shape[1]))
    with open(out, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in Y:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    print(out)
    return 0


def _load_features(path) -> np.ndarray:
    # a features-only file: reuse the CSV reader with a dummy trailing column
    import csv
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise DataError(f"{path}: no data rows")
    try:
        X = np.array([[float(v) for v in r] for r in rows[1:]], dtype=np.float64)
    except ValueError as e:
        raise DataError(f"{path}: {e}") from None
    Dataset(X, np.zeros((X.shape[0], 1)))  # validation only
    return X


def grid_config_from_args(args) -> GridConfig:
    d = _read_json(args.config)
    if args.seed is not None:
        d["seed"] = args.seed
    if args.subsample_silhouette is not None:
        d["silhouette_sample"] = args.subsample_silhouette
    if getattr(args, "data", None):
        d["dataset"] = {"csv": args.data, "n_targets": args.n_targets}
    try:
        return GridConfig.from_dict(d)
    except (BenchmarkError, DataError, ClusteringError, RegressorError, TypeError, KeyError) as e:
        raise UsageError(f"invalid grid config: {e}") from None


def cmd_grid(args) -> int:
    cfg = grid_config_from_args(args)
    log = lambda msg: print(msg, file=sys.stderr, flush=True)  # noqa: E731
    records = run_grid(cfg, threads=args.threads, progress=log)
    bundle = report(records, cfg.rui_weights, contended=args.threads > 1)
    out = write_report(bundle, args.out_dir)
    (out / "grid_config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
    print(bundle["table1_best_rmse.md"])
    print(bundle["table2_rui.md"])
    failed = sum(not r.ok for r in records)
    if failed:
        print(f"{failed} failed cells, see failed_cells.csv", file=sys.stderr)
    return 0


def cmd_rui(args) -> int:
    w = args.weights
    if len(w) != 3:
        raise UsageError("--weights needs three values: silhouette,rmse,pred_s")
    records = records_from_csv(Path(args.metrics).read_text())
    rows = [r for r in records if r.ok and not r.is_baseline and r.silhouette is not None]
    if not rows:
        raise BenchmarkError("no successful clustered records to rank")
    try:
        table = RuiTable((MetricColumn("silhouette", MAXIMIZE, [r.silhouette for r in rows]),
                          MetricColumn("rmse", MINIMIZE, [r.rmse for r in rows]),
                          MetricColumn("pred_s", MINIMIZE, [r.pred_s for r in rows])),
                         np.array(w), tuple((r.method, r.cluster_size) for r in rows))
    except MetricError as e:
        raise UsageError(str(e)) from None
    res = rui(table)
    order = sorted(range(table.m), key=lambda i: (-res.scores[i], i))
    print("rank,method,cluster_size,rui,silhouette,rmse,pred_s")
    for rank, i in enumerate(order[:args.top], start=1):
        r = rows[i]
        print(f"{rank},{r.method},{r.cluster_size},{res.scores[i]:.6f},{r.silhouette:.6f},{r.rmse:.6f},"
              f"{r.pred_s:.6f}")
    return 0


_COMMANDS = {"generate": cmd_generate, "train": cmd_train, "predict": cmd_predict, "grid": cmd_grid,
             "rui": cmd_rui}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        return _COMMANDS[args.command](args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:
        # --help exits 0 through argparse
        return int(e.code or 0)
    except (DataError, PipelineError, BenchmarkError, ClusteringError, RegressorError, MetricError, OSError,
            ValueError) as e:
        print(f"clusterpredict: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
