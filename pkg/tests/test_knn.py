import json

import numpy as np
import pytest

from iqclassify import (
    KnnModel,
    LabeledDataset,
    euclidean_distance,
    k_nearest,
    knn_from_dict,
    knn_to_dict,
    load_knn,
    save_knn,
    standardize,
    train_knn,
)
from iqclassify.knn import predict, predict_many
from oracles import knn_reference

IDENTITY_2D = (np.zeros(2), np.ones(2))
IDENTITY_3D = (np.zeros(3), np.ones(3))


def raw_model(points, labels, k, stats=None):
    """Model over raw coordinates (identity stats, no scaling applied)."""
    points = np.asarray(points, dtype=np.float64)
    if stats is None:
        stats = (np.zeros(points.shape[1]), np.ones(points.shape[1]))
    names = tuple(f"f{i}" for i in range(points.shape[1]))
    return KnnModel(points, np.asarray(labels), k, names, stats)


def test_euclidean_distance_hand_values():
    assert euclidean_distance([0.0, 0.0], [3.0, 4.0]) == 5.0
    assert euclidean_distance([1.0], [1.0]) == 0.0
    with pytest.raises(ValueError):
        euclidean_distance([1.0, 2.0], [1.0])


def test_k_nearest_orders_by_distance_then_index():
    m = raw_model([[0.0], [1.0], [2.0], [4.0]], [0, 0, 0, 0], k=4)
    got = k_nearest(m, [1.5])
    assert [i for i, _ in got] == [1, 2, 0, 3]  # 0.5-tie: index 1 before 2
    assert [d for _, d in got] == [0.5, 0.5, 1.5, 2.5]


def test_k_nearest_truncates_to_k_with_stable_ties():
    m = raw_model([[0.0], [1.0], [1.0], [1.0]], [0, 1, 2, 0], k=2)
    got = k_nearest(m, [0.0])
    assert got == [(0, 0.0), (1, 1.0)]  # lowest index among the 1.0 ties


def test_query_dimension_checked():
    m = raw_model([[0.0, 0.0]], [0], k=1)
    with pytest.raises(ValueError):
        k_nearest(m, [1.0, 2.0, 3.0])


def test_predict_matches_reference_on_random_queries():
    rng = np.random.default_rng(17)
    points = rng.normal(0.0, 2.0, (60, 3))
    labels = rng.integers(0, 3, 60)
    m = raw_model(points, labels, k=10, stats=IDENTITY_3D)
    queries = rng.normal(0.0, 2.5, (1000, 3))
    preds = predict_many(m, queries)
    for q, got in zip(queries, preds):
        assert got == knn_reference(points, labels, 10, q)


def test_predict_many_agrees_with_single_predict():
    rng = np.random.default_rng(1)
    points = rng.normal(0, 1, (25, 2))
    labels = rng.integers(0, 3, 25)
    m = raw_model(points, labels, k=7)
    queries = rng.normal(0, 1, (40, 2))
    many = predict_many(m, queries)
    singles = [int(predict(m, q)) for q in queries]
    assert many.tolist() == singles


def test_prediction_invariant_to_training_row_order():
    rng = np.random.default_rng(23)
    points = rng.normal(0, 1, (40, 2))
    labels = rng.integers(0, 3, 40)
    perm = rng.permutation(40)
    a = raw_model(points, labels, k=5)
    b = raw_model(points[perm], labels[perm], k=5)
    queries = rng.normal(0, 1, (200, 2))
    assert np.array_equal(predict_many(a, queries), predict_many(b, queries))


def test_vote_tie_breaks_by_summed_distance():
    # k=4, two votes per label; label 1 has the smaller distance sum.
    points = [[0.0], [3.0], [1.0], [1.5]]
    labels = [0, 0, 1, 1]
    m = raw_model(points, labels, k=4)
    assert int(predict(m, [0.0])) == 1  # sums: label 0 -> 3.0, label 1 -> 2.5
    flipped = raw_model(points, [1, 1, 0, 0], k=4)
    assert int(predict(flipped, [0.0])) == 0


def test_vote_tie_breaks_by_label_code_last():
    # Perfectly symmetric: one vote each, equal distances.
    m = raw_model([[1.0], [-1.0]], [2, 1], k=2)
    assert int(predict(m, [0.0])) == 1
    m2 = raw_model([[1.0], [-1.0]], [0, 2], k=2)
    assert int(predict(m2, [0.0])) == 0


def test_k_one_memorizes_training_points():
    rng = np.random.default_rng(9)
    points = rng.normal(0, 3, (30, 3))
    labels = rng.integers(0, 3, 30)
    m = raw_model(points, labels, k=1, stats=IDENTITY_3D)
    assert np.array_equal(predict_many(m, points), labels)


def test_train_knn_requires_standardized_dataset():
    ds = LabeledDataset(np.arange(30.0).reshape(10, 3) ** 1.5,
                        np.arange(10) % 3)
    with pytest.raises(ValueError):
        train_knn(ds)
    std = standardize(ds)
    m = train_knn(std, k=3)
    assert m.method == "knn"
    assert m.n_train == 10
    assert m.k == 3
    assert np.array_equal(m.points, std.features)
    assert train_knn(std).k == 10


def test_model_validation():
    pts = np.zeros((5, 2))
    labs = np.zeros(5, dtype=int)
    with pytest.raises(ValueError):
        KnnModel(pts, labs, 0, ("a", "b"), IDENTITY_2D)
    with pytest.raises(ValueError):
        KnnModel(pts, labs, 6, ("a", "b"), IDENTITY_2D)
    with pytest.raises(ValueError):
        KnnModel(pts, labs[:3], 2, ("a", "b"), IDENTITY_2D)
    with pytest.raises(ValueError):
        KnnModel(pts, labs, 2, ("a", "b"), None)
    assert KnnModel(pts, labs, 5, ("a", "b"), IDENTITY_2D).k == 5


def test_dict_round_trip():
    rng = np.random.default_rng(2)
    points = rng.normal(0, 1, (15, 2))
    labels = rng.integers(0, 3, 15)
    m = raw_model(points, labels, k=4)
    clone = knn_from_dict(knn_to_dict(m))
    queries = rng.normal(0, 1, (50, 2))
    assert np.array_equal(predict_many(m, queries),
                          predict_many(clone, queries))
    assert clone.k == 4 and clone.n_train == 15
    with pytest.raises(ValueError):
        knn_from_dict({"model_type": "svm"})


def test_save_load_file_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    m = raw_model(rng.normal(0, 1, (12, 3)), rng.integers(0, 3, 12), k=5,
                  stats=IDENTITY_3D)
    path = tmp_path / "knn.json"
    save_knn(m, path)
    payload = json.loads(path.read_text())
    assert payload["model_type"] == "knn"
    assert payload["k"] == 5
    loaded = load_knn(path)
    queries = rng.normal(0, 1, (30, 3))
    assert np.array_equal(predict_many(m, queries),
                          predict_many(loaded, queries))
    again = tmp_path / "knn2.json"
    save_knn(m, again)
    assert again.read_bytes() == path.read_bytes()
