import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from clusterpredict.data import (DataError, Dataset, SplitSpec, StandardScaler, SyntheticConfig, apply_scaler,
                                 fit_scaler, generate_synthetic, load_csv, save_csv, split)
from clusterpredict.clustering import KMeansConfig, kmeans_fit, silhouette
from clusterpredict.regressors import KnnConfig, knn_fit

import oracles

# oracle silhouette of k=4 K-means on SyntheticConfig(n_samples=2000, spacing=3.0)
FROZEN_SEPARATED_SILHOUETTE = 0.7459319737156822


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


# ------------------------------------------------------------------------- CSV


def test_load_csv_splits_trailing_targets(tmp_path):
    p = _write(tmp_path, "f1,f2,y1\n1,2,3\n4,5,6\n7,8,9\n")
    ds = load_csv(p, 1)
    assert (ds.n_samples, ds.n_features, ds.n_targets) == (3, 2, 1)
    assert ds.feature_names == ("f1", "f2") and ds.target_names == ("y1",)
    np.testing.assert_array_equal(ds.targets[:, 0], [3, 6, 9])
    np.testing.assert_array_equal(ds.features[2], [7, 8])


def test_load_csv_accepts_scientific_notation(tmp_path):
    ds = load_csv(_write(tmp_path, "a,b\n1e3,-2.5E-2\n"), 1)
    assert ds.features[0, 0] == 1000.0 and ds.targets[0, 0] == -0.025


def test_load_csv_nan_reports_line(tmp_path):
    p = _write(tmp_path, "f1,y\n1,2\nNaN,3\n")
    with pytest.raises(DataError, match=r":3"):
        load_csv(p, 1)


def test_load_csv_malformed_row_reports_line(tmp_path):
    p = _write(tmp_path, "f1,f2,y\n1,2,3\n4,5\n")
    with pytest.raises(DataError, match=r":3"):
        load_csv(p, 1)
    p = _write(tmp_path, "f1,y\n1,abc\n", "e.csv")
    with pytest.raises(DataError, match=r":2"):
        load_csv(p, 1)


def test_load_csv_too_many_targets(tmp_path):
    p = _write(tmp_path, "f1,y\n1,2\n")
    with pytest.raises(DataError):
        load_csv(p, 2)


def test_load_csv_missing_file(tmp_path):
    with pytest.raises((DataError, OSError)):
        load_csv(tmp_path / "nope.csv", 1)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(2, 5)),
              elements=st.floats(-1e12, 1e12, allow_nan=False, allow_infinity=False)))
def test_csv_round_trip_is_exact(tmp_path_factory, M):
    # float repr round-trips, so a second write is byte-identical to the first
    d = tmp_path_factory.mktemp("rt")
    ds = Dataset(M[:, :-1], M[:, -1:])
    p1, p2 = d / "a.csv", d / "b.csv"
    save_csv(ds, p1)
    back = load_csv(p1, 1)
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.targets, ds.targets)
    save_csv(back, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.ones((3, 2)), np.ones((2, 1)))
    with pytest.raises(DataError):
        Dataset(np.array([[np.inf]]), np.ones((1, 1)))
    ds = Dataset(np.ones((3, 2)), np.arange(3.0))
    assert ds.targets.shape == (3, 1)
    with pytest.raises(ValueError):
        ds.features[0, 0] = 5.0


# ------------------------------------------------------------------- synthetic


def test_synthetic_is_deterministic():
    cfg = SyntheticConfig(n_samples=500, seed=7)
    a, b = generate_synthetic(cfg), generate_synthetic(cfg)
    assert a.features.tobytes() == b.features.tobytes()
    assert a.targets.tobytes() == b.targets.tobytes()
    c = generate_synthetic(SyntheticConfig(n_samples=500, seed=8))
    assert not np.array_equal(a.features, c.features)


def test_synthetic_shapes_and_load_range():
    cfg = SyntheticConfig(n_samples=300, d=5, L=2, load_range=(10.0, 20.0))
    ds = generate_synthetic(cfg)
    assert ds.features.shape == (300, 5) and ds.targets.shape == (300, 2)
    assert ds.targets.min() >= 10.0 and ds.targets.max() < 20.0


@pytest.mark.parametrize("d,L", [(1, 1), (2, 3), (4, 3), (6, 2)])
def test_synthetic_odd_dimensions(d, L):
    ds = generate_synthetic(SyntheticConfig(n_samples=50, d=d, L=L))
    assert ds.features.shape == (50, d)


def test_noiseless_single_component_is_a_function_of_targets():
    ds = generate_synthetic(SyntheticConfig(n_samples=400, n_components=1, noise_std=0.0))
    r = knn_fit(ds.features, ds.targets, KnnConfig(n_neighbors=1))
    assert oracles.rmse(r.predict(ds.features), ds.targets) == 0.0


def test_separated_components_have_high_silhouette():
    ds = generate_synthetic(SyntheticConfig(n_samples=2000, spacing=3.0, seed=0))
    X = fit_scaler(ds).transform(ds.features)
    m = kmeans_fit(X, KMeansConfig(k=4, seed=0))
    s = silhouette(X, m.labels)
    assert s == pytest.approx(FROZEN_SEPARATED_SILHOUETTE, abs=1e-9)
    assert s > 0.5


@pytest.mark.parametrize("kw", [dict(n_samples=0), dict(n_components=0), dict(n_samples=3, n_components=4),
                                dict(noise_std=-1.0), dict(load_range=(5.0, 5.0)), dict(seed=-1),
                                dict(spacing=-0.1)])
def test_synthetic_config_validation(kw):
    with pytest.raises(DataError):
        SyntheticConfig(**kw)


def test_synthetic_config_json_round_trip():
    cfg = SyntheticConfig(n_samples=123, noise_std=0.5, load_range=(1, 2), seed=4)
    assert SyntheticConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(DataError):
        SyntheticConfig.from_dict({"bogus": 1})


# ----------------------------------------------------------------------- split


def test_split_sizes():
    ds = Dataset(np.arange(10.0)[:, None], np.arange(10.0))
    tr, te = split(ds, SplitSpec(0.8, 0))
    assert (tr.n_samples, te.n_samples) == (8, 2)


def test_split_full_scale_sizes():
    # sizes only; avoid materialising a million-row dataset twice
    m = 1_000_000
    assert math.floor(m * SplitSpec().train_fraction) == 800_000
    ds = Dataset(np.zeros((m, 1)), np.zeros((m, 1)))
    tr, te = split(ds)
    assert (tr.n_samples, te.n_samples) == (800_000, 200_000)


def test_split_deterministic_and_partition():
    ds = generate_synthetic(SyntheticConfig(n_samples=101, seed=2))
    a = split(ds, SplitSpec(0.7, 5))
    b = split(ds, SplitSpec(0.7, 5))
    assert a[0].features.tobytes() == b[0].features.tobytes()
    rows = lambda d: sorted(map(tuple, np.column_stack([d.features, d.targets])))  # noqa: E731
    assert sorted(rows(a[0]) + rows(a[1])) == rows(ds)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 60), st.floats(0.01, 0.99), st.integers(0, 2**32 - 1))
def test_split_is_multiset_partition(m, frac, seed):
    ds = Dataset(np.arange(m, dtype=float)[:, None], np.arange(m, dtype=float))
    n_train = math.floor(m * frac)
    if n_train in (0, m):
        with pytest.raises(DataError):
            split(ds, SplitSpec(frac, seed))
        return
    tr, te = split(ds, SplitSpec(frac, seed))
    assert tr.n_samples == n_train
    assert sorted(np.concatenate([tr.targets[:, 0], te.targets[:, 0]])) == list(range(m))


def test_split_errors():
    with pytest.raises(DataError):
        split(Dataset(np.ones((1, 1)), np.ones((1, 1))))
    with pytest.raises(DataError):
        SplitSpec(1.0)


# ---------------------------------------------------------------------- scaler


def test_scaler_population_std():
    ds = Dataset(np.array([[1.0], [2.0], [3.0]]), np.zeros(3))
    sc = fit_scaler(ds)
    assert sc.means[0] == 2.0
    assert sc.stds[0] == pytest.approx(math.sqrt(2 / 3), rel=1e-15)
    assert apply_scaler(sc, ds).features.mean() == pytest.approx(0.0, abs=1e-15)


def test_scaler_train_statistics_not_test():
    ds = generate_synthetic(SyntheticConfig(n_samples=400))
    tr, te = split(ds)
    sc = fit_scaler(tr)
    Zt = sc.transform(tr.features)
    np.testing.assert_allclose(Zt.mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(Zt.std(axis=0), 1.0, rtol=1e-9)
    assert np.abs(sc.transform(te.features).mean(axis=0)).max() > 1e-6


def test_scaler_double_application_is_identity():
    ds = generate_synthetic(SyntheticConfig(n_samples=300, seed=1))
    z = apply_scaler(fit_scaler(ds), ds)
    sc2 = fit_scaler(z)
    np.testing.assert_allclose(sc2.means, 0.0, atol=1e-12)
    np.testing.assert_allclose(sc2.stds, 1.0, rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 20), st.integers(1, 4)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_scaler_inverse_recovers_inputs(X):
    if (X.std(axis=0) <= 1e-6 * (1 + np.abs(X).max(axis=0))).any():
        return
    sc = fit_scaler(Dataset(X, np.zeros(len(X))))
    np.testing.assert_allclose(sc.inverse_transform(sc.transform(X)), X, rtol=1e-12,
                               atol=1e-12 * np.abs(X).max())


def test_scaler_errors():
    with pytest.raises(DataError, match="zero-variance"):
        fit_scaler(Dataset(np.array([[1.0, 2.0], [1.0, 3.0]]), np.zeros(2)))
    sc = fit_scaler(Dataset(np.array([[1.0], [3.0]]), np.zeros(2)))
    with pytest.raises(DataError):
        apply_scaler(sc, Dataset(np.ones((2, 2)), np.zeros(2)))


def test_scaler_dict_round_trip():
    sc = StandardScaler(np.array([1.5, -2.0]), np.array([0.1, 3.0]))
    back = StandardScaler.from_dict(sc.to_dict())
    assert back.means.tobytes() == sc.means.tobytes() and back.stds.tobytes() == sc.stds.tobytes()
