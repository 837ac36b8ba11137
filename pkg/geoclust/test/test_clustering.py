import itertools
from functools import lru_cache

import numpy as np
import pytest

from .. import clustering
from ..errors import DataError, NoElbowError, NumericError
from ..utils import make_rng
from .conftest import equidistant_spectra


def blobs(rng, centres, per_cluster=50, spread=0.05):
    centres = np.asarray(centres, dtype=np.float64)
    points = [c + rng.normal(scale=spread, size=(per_cluster, centres.shape[1])) for c in centres]
    return np.vstack(points)


def test_one_dimensional_pairs():
    model = clustering.kmeans_fit(np.array([[0.0], [1.0], [10.0], [11.0]]), 2, seed=0)

    assert sorted(model.centroids[:, 0].tolist()) == [0.5, 10.5]
    assert model.inertia == pytest.approx(1.0)
    assert model.labels[0] == model.labels[1] != model.labels[2] == model.labels[3]


def test_single_cluster_is_the_mean(rng):
    values = rng.normal(size=(40, 3))
    model = clustering.kmeans_fit(values, 1, seed=0)

    assert np.allclose(model.centroids[0], values.mean(axis=0))
    assert model.inertia == pytest.approx(float(((values - values.mean(axis=0)) ** 2).sum()))


def test_one_cluster_per_distinct_point():
    values = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 2.0], [5.0, 5.0], [5.0, 5.0]])
    assert clustering.kmeans_fit(values, 3, seed=1).inertia == 0.0


def test_k_exceeds_pixels():
    with pytest.raises(DataError, match="exceeds"):
        clustering.kmeans_fit(np.zeros((3, 2)), 4, seed=0)


def test_non_finite_features():
    with pytest.raises(NumericError):
        clustering.kmeans_fit(np.array([[0.0], [np.nan]]), 1, seed=0)


def test_ties_go_to_lowest_centroid():
    labels, distances = clustering._assign(np.array([[1.0]]), np.array([[2.0], [0.0]]))
    assert labels.tolist() == [0]
    assert distances.tolist() == [1.0]


def test_empty_cluster_repaired():
    values = np.array([[0.0], [0.1], [0.2], [10.0]])
    _, labels, _, _, _ = clustering.lloyd(values, np.array([[0.0], [10.0], [100.0]]))

    assert sorted(set(labels.tolist())) == [0, 1, 2]


def test_inertia_never_increases(rng):
    for case in range(20):
        values = rng.normal(size=(60, 2)) * rng.uniform(0.1, 10.0)
        k = int(rng.integers(2, 6))
        start = clustering.kmeans_plus_plus(values, k, make_rng(case))
        _, _, _, _, history = clustering.lloyd(values, start)
        for before, after in zip(history, history[1:]):
            assert after <= before * (1 + 1e-9) + 1e-12


@lru_cache(maxsize=None)
def labelings(n, k):
    return np.array(list(itertools.product(range(k), repeat=n)), dtype=np.int8)


def brute_force_optimum(values, k):
    assignments = labelings(values.shape[0], k)
    squared = (values**2).sum(axis=1)
    total = np.zeros(assignments.shape[0])
    for cluster in range(k):
        members = (assignments == cluster).astype(np.float64)
        counts = members.sum(axis=1)
        sums = members @ values
        within = members @ squared - (sums**2).sum(axis=1) / np.where(counts > 0, counts, 1)
        total += np.where(counts > 0, within, 0.0)
    return float(total.min())


def test_restarts_against_brute_force():
    near_optimal = 0
    for case in range(100):
        rng = make_rng(1000 + case)
        k = int(rng.integers(1, 4))
        n = int(rng.integers(k + 1, 11))
        values = rng.normal(size=(n, int(rng.integers(1, 3))))
        optimum = brute_force_optimum(values, k)
        inertia = clustering.kmeans_fit(values, k, seed=case, restarts=10).inertia

        assert inertia >= optimum - 1e-9 * max(optimum, 1.0)
        if inertia <= 1.05 * optimum + 1e-12:
            near_optimal += 1
    assert near_optimal >= 95


def test_deterministic_for_seed(rng):
    values = blobs(rng, [[0, 0], [3, 0], [0, 3]])
    a = clustering.kmeans_fit(values, 3, seed=5)
    b = clustering.kmeans_fit(values, 3, seed=5)

    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.centroids, b.centroids)
    assert a.inertia_history == b.inertia_history


def test_independent_of_thread_count(mocker, rng):
    values = rng.normal(size=(300, 3))
    mocker.patch.object(clustering, "worker_count", return_value=1)
    single = clustering.kmeans_fit(values, 4, seed=8)
    mocker.patch.object(clustering, "worker_count", return_value=4)
    many = clustering.kmeans_fit(values, 4, seed=8)

    assert np.array_equal(single.labels, many.labels)
    assert single.inertia == many.inertia


def test_inertia_permutation_invariant(rng):
    values = blobs(rng, [[0, 0], [4, 0], [0, 4]])
    permuted = values[rng.permutation(values.shape[0])]

    a = clustering.kmeans_fit(values, 3, seed=2).inertia
    b = clustering.kmeans_fit(permuted, 3, seed=2).inertia
    assert a == pytest.approx(b, rel=1e-9)


def test_warm_start_candidate_competes(rng):
    values = blobs(rng, [[0, 0], [4, 0], [0, 4]])
    perfect = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]])
    model = clustering.kmeans_fit(values, 3, seed=2, restarts=1, initial_centroids=(perfect,))

    assert model.inertia == pytest.approx(clustering.kmeans_fit(values, 3, seed=2).inertia)


def test_elbow_sweep_shape_and_monotone(rng):
    values = blobs(rng, [[0, 0], [3, 0], [0, 3], [3, 3]], per_cluster=30, spread=0.3)
    curve = clustering.elbow_sweep(values, seed=4, k_min=2, k_max=8, restarts=3)

    assert curve.k_values == (2, 3, 4, 5, 6, 7, 8)
    assert len(curve.wcss) == 7
    for before, after in zip(curve.wcss, curve.wcss[1:]):
        assert after <= before
    assert curve.model_for(4).k == 4


def test_elbow_sweep_short_range():
    curve = clustering.elbow_sweep(np.arange(10.0)[:, np.newaxis], seed=0, k_min=2, k_max=4)
    assert len(curve.k_values) == 3


def test_elbow_sweep_too_narrow():
    with pytest.raises(DataError):
        clustering.elbow_sweep(np.arange(10.0)[:, np.newaxis], seed=0, k_min=2, k_max=3)


def test_elbow_sweep_k_max_exceeds_pixels():
    with pytest.raises(DataError, match="exceeds"):
        clustering.elbow_sweep(np.arange(5.0)[:, np.newaxis], seed=0, k_min=2, k_max=6)


def test_elbow_finds_six_units():
    rng = make_rng(21)
    centres = equidistant_spectra(6, 8)
    sizes = [500, 700, 600, 800, 550, 650]
    values = np.vstack(
        [c + rng.normal(scale=0.02, size=(size, 8)) for c, size in zip(centres, sizes)]
    )
    curve = clustering.elbow_sweep(values, seed=3, k_min=2, k_max=12, restarts=5)

    assert clustering.kneedle_detect(curve) in (5, 6, 7)


def curve_of(wcss, k_min=1):
    return clustering.ElbowCurve(k_values=range(k_min, k_min + len(wcss)), wcss=wcss)


def test_kneedle_hand_curve():
    assert clustering.kneedle_detect(curve_of([10, 5, 2, 1.9, 1.8, 1.7])) == 3


def test_kneedle_three_points():
    assert clustering.kneedle_detect(curve_of([4, 1, 0.5])) == 2


def test_kneedle_affine_invariant():
    wcss = np.array([10, 5, 2, 1.9, 1.8, 1.7])
    assert clustering.kneedle_detect(curve_of(3.0 * wcss + 7.0)) == 3
    assert clustering.kneedle_detect(curve_of(0.001 * wcss)) == 3


def test_kneedle_linear_has_no_elbow():
    with pytest.raises(NoElbowError):
        clustering.kneedle_detect(curve_of([10, 8, 6, 4, 2]))


def test_kneedle_concave_has_no_elbow():
    with pytest.raises(NoElbowError):
        clustering.kneedle_detect(curve_of([10, 9.9, 9.5, 8, 0]))


def test_kneedle_flat_curve():
    with pytest.raises(NumericError):
        clustering.kneedle_detect(curve_of([3, 3, 3]))


def test_kneedle_too_few_points():
    with pytest.raises(DataError):
        clustering.kneedle_detect(curve_of([3, 1]))


def test_save_load_cluster_model(tmp_path, rng):
    model = clustering.kmeans_fit(rng.normal(size=(30, 2)), 3, seed=1)
    clustering.save_cluster_model(model, str(tmp_path))
    loaded = clustering.load_cluster_model(str(tmp_path), labels=model.labels)

    assert np.array_equal(loaded.centroids, model.centroids)
    assert loaded.inertia == model.inertia
    assert loaded.seed == 1
    assert np.array_equal(loaded.labels, model.labels)


def test_elbow_csv(tmp_path):
    curve = curve_of([10, 5, 2, 1.9], k_min=2)
    clustering.write_elbow_csv(curve, str(tmp_path / "elbow.csv"))

    with open(tmp_path / "elbow.csv", encoding="utf-8") as f:
        assert f.readline().strip() == "k,wcss"
    loaded = clustering.read_elbow_csv(str(tmp_path / "elbow.csv"))
    assert loaded.k_values == curve.k_values
    assert loaded.wcss == curve.wcss


def test_elbow_csv_validity_columns(tmp_path):
    curve = clustering.ElbowCurve(
        k_values=(1, 2, 3),
        wcss=(10.0, 2.0, 1.5),
        calinski_harabasz=(float("nan"), 40.0, float("inf")),
        davies_bouldin=(float("nan"), 0.25, 0.5),
    )
    clustering.write_elbow_csv(curve, str(tmp_path / "elbow.csv"))

    with open(tmp_path / "elbow.csv", encoding="utf-8") as f:
        assert f.readline().strip() == "k,wcss,calinski_harabasz,davies_bouldin"
    loaded = clustering.read_elbow_csv(str(tmp_path / "elbow.csv"))
    assert np.isnan(loaded.calinski_harabasz[0])
    assert loaded.calinski_harabasz[1:] == (40.0, float("inf"))
    assert loaded.davies_bouldin[1:] == (0.25, 0.5)


def test_elbow_curve_needs_a_score_per_k():
    with pytest.raises(DataError, match="one score per k"):
        clustering.ElbowCurve(
            k_values=(1, 2), wcss=(2.0, 1.0), calinski_harabasz=(1.0,), davies_bouldin=(1.0,)
        )
