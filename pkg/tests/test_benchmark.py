import json

import numpy as np
import pytest

from clusterpredict.benchmark import (BenchmarkError, ExperimentRecord, GridConfig, MethodSpec, best_rmse_table,
                                      cell_seed, default_methods, records_from_csv, records_to_csv, report,
                                      rui_summary, rui_table, run_grid, svg_line_chart, write_report)
from clusterpredict.data import SyntheticConfig, save_csv, generate_synthetic

KNN5 = {"kind": "knn", "n_neighbors": 5}
OLS = {"kind": "ols"}
GB_SMALL = {"kind": "gb", "n_estimators": 10, "max_depth": 3}


def _small_cfg(**kw):
    base = dict(cluster_sizes=(2, 4), methods=(MethodSpec("kmeans", KNN5), MethodSpec("kmeans", OLS),
                                               MethodSpec("ot_kmeans", KNN5)),
                synthetic=SyntheticConfig(n_samples=600, seed=1), seed=3)
    base.update(kw)
    return GridConfig(**base)


@pytest.fixture(scope="module")
def small_records():
    return run_grid(_small_cfg())


def _rec(method, k, rmse, r2, sil, train, pred):
    return ExperimentRecord(method, k, rmse, r2, sil, train, pred, 0)


# ----------------------------------------------------------------------- grid


def test_record_count_and_order(small_records):
    cfg = _small_cfg()
    n_regressors = len({m.regressor_id for m in cfg.methods})
    assert len(small_records) == n_regressors + len(cfg.methods) * len(cfg.cluster_sizes)
    assert [r.method for r in small_records[:2]] == ["knn5", "ols"]
    assert all(r.is_baseline and r.silhouette is None for r in small_records[:2])
    assert [(r.method, r.cluster_size) for r in small_records[2:4]] == [("kmeans+knn5", 2), ("kmeans+knn5", 4)]
    assert all(r.ok and r.silhouette is not None for r in small_records[2:])


def test_minimal_grid():
    recs = run_grid(_small_cfg(cluster_sizes=(3,), methods=(MethodSpec("kmeans", OLS),)))
    assert [(r.method, r.cluster_size) for r in recs] == [("ols", 0), ("kmeans+ols", 3)]


def test_shared_clustering_gives_shared_silhouette(small_records):
    by = {(r.method, r.cluster_size): r for r in small_records}
    for k in (2, 4):
        assert by[("kmeans+knn5", k)].silhouette == by[("kmeans+ols", k)].silhouette
        assert by[("kmeans+knn5", k)].seed == by[("kmeans+ols", k)].seed


def test_rerun_and_threads_are_deterministic(small_records):
    again = run_grid(_small_cfg(), threads=3)
    assert [r.non_time_fields() for r in again] == [r.non_time_fields() for r in small_records]


def test_failed_cells_are_recorded_not_raised():
    # 600 * 0.8 = 480 training rows cannot host 400 clusters of >= 5 neighbours
    recs = run_grid(_small_cfg(cluster_sizes=(400,), methods=(MethodSpec("kmeans", KNN5),)))
    bad = [r for r in recs if not r.ok]
    assert len(bad) == 1 and bad[0].cluster_size == 400 and "needs at least 5" in bad[0].reason
    bundle = report(recs)
    assert "needs at least 5" in bundle["failed_cells.csv"]


def test_cell_seed_depends_only_on_its_inputs():
    assert cell_seed(0, "kmeans", 5) == cell_seed(0, "kmeans", 5)
    assert len({cell_seed(0, "kmeans", 5), cell_seed(1, "kmeans", 5), cell_seed(0, "ot_kmeans", 5),
                cell_seed(0, "kmeans", 10)}) == 4


def test_grid_on_csv_dataset(tmp_path):
    p = tmp_path / "d.csv"
    save_csv(generate_synthetic(SyntheticConfig(n_samples=400, seed=2)), p)
    cfg = _small_cfg(synthetic=None, csv_path=str(p), n_targets=3, cluster_sizes=(2,),
                     methods=(MethodSpec("kmeans", OLS),))
    assert len(run_grid(cfg)) == 2


# --------------------------------------------------------------------- config


def test_grid_config_defaults_and_json_round_trip():
    cfg = GridConfig()
    assert cfg.cluster_sizes == tuple(range(5, 201, 5)) and len(cfg.cluster_sizes) == 40
    assert [m.method_id for m in default_methods()] == [
        "kmeans+gb", "kmeans+knn3", "kmeans+knn5", "kmeans+knn9", "ot_kmeans+gb", "ot_kmeans+gb_per_load",
        "ot_kmeans+knn5"]
    assert GridConfig.from_json(json.dumps(cfg.to_dict())) == cfg
    rng = GridConfig.from_dict({"cluster_sizes": {"start": 5, "stop": 20, "step": 5}})
    assert rng.cluster_sizes == (5, 10, 15, 20)


@pytest.mark.parametrize("kw", [dict(cluster_sizes=()), dict(cluster_sizes=(5, 5)), dict(methods=()),
                                dict(rui_weights=(0.5, 0.5, 0.5)), dict(seed=-1),
                                dict(csv_path="x.csv"), dict(synthetic=None),
                                dict(methods=(MethodSpec("kmeans", OLS), MethodSpec("kmeans", OLS)))])
def test_grid_config_validation(kw):
    with pytest.raises(BenchmarkError):
        GridConfig(**kw)


def test_method_spec_validation():
    with pytest.raises(BenchmarkError):
        MethodSpec("dbscan", OLS)
    with pytest.raises(BenchmarkError):
        MethodSpec("kmeans", OLS, {"k": 3})
    with pytest.raises(BenchmarkError):
        GridConfig.from_dict({"bogus": 1})
    assert MethodSpec("kmeans", OLS, {"n_init": 2}).clusterer_id == 'kmeans{"n_init":2}'


# ------------------------------------------------------------------- records


def test_records_csv_round_trip_exact(small_records):
    text = records_to_csv(small_records)
    back = records_from_csv(text)
    assert back == small_records
    assert records_to_csv(back) == text


def test_record_validation():
    with pytest.raises(BenchmarkError):
        _rec("gb", 0, 1.0, 0.5, 0.3, 1.0, 1.0)
    with pytest.raises(BenchmarkError):
        _rec("kmeans+gb", 5, None, 0.5, 0.3, 1.0, 1.0)
    with pytest.raises(BenchmarkError):
        records_from_csv("a,b\n")


# -------------------------------------------------------------------- report


def test_report_regenerates_bit_identically_from_csv(small_records, tmp_path):
    bundle = report(small_records)
    out = write_report(bundle, tmp_path / "rep")
    regen = report(records_from_csv((out / "records.csv").read_text()))
    assert regen == bundle
    for name, text in bundle.items():
        assert (out / name).read_text() == text


def test_max_difference_row_on_hand_built_fixture():
    recs = [_rec("gb", 0, 100.0, 0.50, None, 10.0, 1.0),
            _rec("kmeans+gb", 5, 60.0, 0.80, 0.4, 20.0, 2.0),
            _rec("ot_kmeans+gb", 10, 120.0, 0.40, 0.3, 5.0, 1.5)]
    rows = best_rmse_table(recs)
    assert [r["kind"] for r in rows] == ["baseline", "clustered", "clustered", "max_diff"]
    d = rows[-1]
    # per column: the clustered entry furthest from the baseline, sign kept
    assert d["rmse"] == (60.0 - 100.0) / 100.0 == -0.4
    assert d["r2"] == 0.80 - 0.50
    assert d["train_s"] == 10.0
    assert d["pred_s"] == 1.0
    md = report(recs)["table1_best_rmse.md"]
    assert "| Maximum difference (gb) | -40% | - | +0.30 | - | +10.00 | +1.00 |" in md


def test_best_rmse_picks_minimum_and_smaller_size_on_ties():
    recs = [_rec("knn5", 0, 10.0, 0.5, None, 1.0, 1.0),
            _rec("kmeans+knn5", 5, 9.0, 0.6, 0.5, 1.0, 1.0),
            _rec("kmeans+knn5", 10, 8.0, 0.6, 0.5, 1.0, 1.0),
            _rec("kmeans+knn5", 15, 8.0, 0.6, 0.5, 1.0, 1.0)]
    rows = best_rmse_table(recs)
    assert rows[1]["cluster_size"] == 10


def test_rui_excludes_baselines_and_flags_global_best(small_records):
    t = rui_table(small_records)
    assert t.m == len(small_records) - 2
    summary = rui_summary(small_records)
    assert [s["method"] for s in summary] == ["kmeans+knn5", "kmeans+ols", "ot_kmeans+knn5"]
    assert sum(s["is_global_best"] for s in summary) == 1
    for s in summary:
        assert 0 <= s["global_max_rui"] <= 1 and 0 <= s["local_max_rui"] <= 1


def test_report_bundle_contents(small_records):
    bundle = report(small_records, contended=True)
    assert {"records.csv", "table1_best_rmse.csv", "table1_best_rmse.md", "table2_rui.csv", "table2_rui.md",
            "curves.csv", "failed_cells.csv", "report.json", "curve_rmse.svg", "curve_rui_local.svg"} <= set(bundle)
    assert "contended" in bundle["table1_best_rmse.md"]
    assert json.loads(bundle["report.json"])["n_records"] == len(small_records)
    assert bundle["curve_rmse.svg"].startswith("<svg")
    with pytest.raises(BenchmarkError):
        report([ExperimentRecord("gb", 0, None, None, None, None, None, 0, "failed", "x")])


def test_svg_escapes_and_handles_flat_series():
    svg = svg_line_chart({"a<b": ([1, 2], [3.0, 3.0])}, "t&t", "y")
    assert "a&lt;b" in svg and "t&amp;t" in svg
    assert np.isfinite([float(x) for x in svg.split('cy="')[1:2][0].split('"')[:1]]).all()
