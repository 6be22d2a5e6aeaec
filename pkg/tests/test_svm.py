import json
import math

import numpy as np
import pytest

from iqclassify import (
    BinarySvmModel,
    KernelSpec,
    LabeledDataset,
    MultiClassSvmModel,
    kernel_eval,
    kernel_matrix,
    load_svm,
    median_pairwise_sq_dist,
    resolve_kernel,
    save_svm,
    standardize,
    svm_from_dict,
    svm_to_dict,
    train_binary,
    train_one_vs_all,
)
from iqclassify.svm import decision_value, decision_values, predict, \
    predict_many
from oracles import kernel_reference, svm_kkt_violations

LINEAR = KernelSpec(kind="linear")


def three_blob_dataset(n_per=40, seed=7, spread=0.35):
    """Standardized dataset with one well-separated blob per label."""
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0, 4.0], [4.0, 0.0, 0.0], [0.0, 4.0, 0.0]])
    rows, labels = [], []
    for lab, c in enumerate(centers):
        rows.append(c + rng.normal(0.0, spread, (n_per, 3)))
        labels.extend([lab] * n_per)
    ds = LabeledDataset(np.vstack(rows), np.array(labels, dtype=np.int64))
    return standardize(ds)


# ---------------------------------------------------------------------------
# Kernels

def test_linear_kernel_hand_value():
    assert kernel_eval(LINEAR, [1.0, 2.0], [3.0, 4.0]) == 11.0


def test_poly_kernel_hand_value():
    spec = KernelSpec(kind="poly", poly_c=1.0, poly_p=2)
    assert kernel_eval(spec, [1.0, 2.0], [3.0, 4.0]) == 144.0
    flat = KernelSpec(kind="poly", poly_c=0.0, poly_p=1)
    assert kernel_eval(flat, [1.0, 2.0], [3.0, 4.0]) == 11.0


def test_rbf_kernel_hand_value():
    spec = KernelSpec(kind="rbf", rbf_c=1.0)
    assert kernel_eval(spec, [0.0, 0.0], [0.0, 0.0]) == 1.0
    assert kernel_eval(spec, [0.0, 0.0], [3.0, 4.0]) == \
        pytest.approx(math.exp(-25.0))
    wide = KernelSpec(kind="rbf", rbf_c=50.0)
    assert kernel_eval(wide, [0.0, 0.0], [3.0, 4.0]) == \
        pytest.approx(math.exp(-0.5))


def test_kernels_match_reference_on_random_pairs():
    rng = np.random.default_rng(11)
    specs = [
        LINEAR,
        KernelSpec(kind="poly", poly_c=1.0, poly_p=3),
        KernelSpec(kind="poly", poly_c=2.5, poly_p=2),
        KernelSpec(kind="rbf", rbf_c=3.7),
    ]
    for _ in range(50):
        a, b = rng.normal(0, 2, (2, 4))
        for spec in specs:
            want = kernel_reference(spec.kind, a, b, spec.poly_c,
                                    spec.poly_p, spec.rbf_c)
            assert kernel_eval(spec, a, b) == pytest.approx(want, rel=1e-12)


def test_kernel_matrix_matches_pairwise_eval():
    rng = np.random.default_rng(2)
    A = rng.normal(0, 1, (6, 3))
    B = rng.normal(0, 1, (4, 3))
    for spec in (LINEAR, KernelSpec(kind="poly"), KernelSpec(kind="rbf",
                                                             rbf_c=2.0)):
        K = kernel_matrix(spec, A, B)
        assert K.shape == (6, 4)
        for i in range(6):
            for j in range(4):
                assert K[i, j] == pytest.approx(
                    kernel_eval(spec, A[i], B[j]), rel=1e-12, abs=1e-12)


def test_gram_matrices_are_positive_semidefinite():
    rng = np.random.default_rng(5)
    X = rng.normal(0, 1.5, (30, 3))
    for spec in (LINEAR, KernelSpec(kind="poly", poly_c=1.0, poly_p=3),
                 KernelSpec(kind="rbf", rbf_c=4.0)):
        K = kernel_matrix(spec, X, X)
        assert np.allclose(K, K.T, atol=1e-10)
        assert np.linalg.eigvalsh(K).min() >= -1e-8
        if spec.kind == "rbf":
            assert np.allclose(np.diag(K), 1.0)


def test_kernel_validation():
    with pytest.raises(ValueError):
        KernelSpec(kind="sigmoid").validate()
    with pytest.raises(ValueError):
        KernelSpec(kind="poly", poly_p=0).validate()
    with pytest.raises(ValueError):
        KernelSpec(kind="poly", poly_c=-1.0).validate()
    with pytest.raises(ValueError):
        KernelSpec(kind="rbf", rbf_c=0.0).validate()
    with pytest.raises(ValueError):
        kernel_eval(KernelSpec(kind="rbf"), [0.0], [1.0])  # unresolved width
    with pytest.raises(ValueError):
        kernel_eval(LINEAR, [1.0, 2.0], [1.0])


def test_median_pairwise_sq_dist_hand_value():
    pts = np.array([[0.0, 0.0], [3.0, 4.0], [0.0, 1.0]])
    # Pair distances squared: 25, 1, 18.
    assert median_pairwise_sq_dist(pts) == 18.0
    with pytest.raises(ValueError):
        median_pairwise_sq_dist(pts[:1])


def test_resolve_kernel_rbf_width():
    pts = np.array([[0.0, 0.0], [3.0, 4.0], [0.0, 1.0]])
    out = resolve_kernel(KernelSpec(kind="rbf"), pts)
    assert out.rbf_c == 36.0  # 2x median squared distance
    pinned = resolve_kernel(KernelSpec(kind="rbf", rbf_c=9.0), pts)
    assert pinned.rbf_c == 9.0
    assert resolve_kernel(LINEAR, pts) is LINEAR
    with pytest.raises(ValueError):
        resolve_kernel(KernelSpec(kind="rbf"), np.zeros((4, 2)))


# ---------------------------------------------------------------------------
# Binary training

def test_symmetric_pair_gives_unit_margins_and_zero_bias():
    rows = np.array([[-1.0], [1.0]])
    targets = np.array([-1.0, 1.0])
    m = train_binary(rows, targets, LINEAR, c_reg=10.0)
    assert m.converged
    assert m.bias == pytest.approx(0.0, abs=1e-3)
    assert decision_value(m, [1.0]) == pytest.approx(1.0, abs=2e-3)
    assert decision_value(m, [-1.0]) == pytest.approx(-1.0, abs=2e-3)
    assert decision_value(m, [5.0]) > 1.0


def test_xor_needs_a_nonlinear_kernel():
    rows = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
    targets = np.array([1.0, 1.0, -1.0, -1.0])
    m = train_binary(rows, targets, KernelSpec(kind="rbf", rbf_c=4.0),
                     c_reg=10.0)
    assert m.converged
    signs = np.sign(decision_values(m, rows))
    assert np.array_equal(signs, targets)


def test_training_satisfies_kkt_conditions():
    rng = np.random.default_rng(21)
    rows = np.vstack([rng.normal(-2.0, 0.8, (30, 2)),
                      rng.normal(2.0, 0.8, (30, 2))])
    targets = np.array([-1.0] * 30 + [1.0] * 30)
    for spec in (LINEAR, KernelSpec(kind="poly", poly_c=1.0, poly_p=3),
                 KernelSpec(kind="rbf", rbf_c=8.0)):
        m = train_binary(rows, targets, spec, c_reg=10.0, tol=1e-3)
        assert m.converged
        violations = svm_kkt_violations(m, rows, targets, tol=1e-3)
        assert violations == []


def test_linear_decision_matches_primal_form():
    rng = np.random.default_rng(3)
    rows = np.vstack([rng.normal(-1.5, 0.5, (25, 3)),
                      rng.normal(1.5, 0.5, (25, 3))])
    targets = np.array([-1.0] * 25 + [1.0] * 25)
    m = train_binary(rows, targets, LINEAR, c_reg=10.0)
    w = m.coeffs @ m.support_vectors
    probes = rng.normal(0, 2, (40, 3))
    direct = probes @ w + m.bias
    assert np.allclose(direct, decision_values(m, probes), atol=1e-6)


def test_dual_constraint_sum_of_coeffs_near_zero():
    rng = np.random.default_rng(13)
    rows = np.vstack([rng.normal(-1.0, 1.0, (40, 2)),
                      rng.normal(1.0, 1.0, (40, 2))])
    targets = np.array([-1.0] * 40 + [1.0] * 40)
    m = train_binary(rows, targets, KernelSpec(kind="rbf", rbf_c=4.0),
                     c_reg=5.0)
    assert abs(float(m.coeffs.sum())) <= 1e-3


def test_train_binary_validation():
    rows = np.array([[0.0], [1.0]])
    with pytest.raises(ValueError):
        train_binary(rows, np.array([1.0, 2.0]), LINEAR)  # not +-1
    with pytest.raises(ValueError):
        train_binary(rows, np.array([1.0, 1.0]), LINEAR)  # one class
    with pytest.raises(ValueError):
        train_binary(rows, np.array([1.0, -1.0, 1.0]), LINEAR)
    with pytest.raises(ValueError):
        train_binary(rows, np.array([1.0, -1.0]), LINEAR, c_reg=0.0)


def test_unconverged_training_is_flagged_not_fatal():
    rng = np.random.default_rng(4)
    rows = rng.normal(0, 1, (60, 2))
    targets = np.where(rng.random(60) < 0.5, 1.0, -1.0)  # pure noise labels
    m = train_binary(rows, targets, LINEAR, c_reg=100.0, max_passes=2)
    assert not m.converged
    assert m.n_sweeps == 2
    assert np.isfinite(decision_value(m, [0.0, 0.0]))


def test_binary_model_validation():
    with pytest.raises(ValueError):
        BinarySvmModel(np.empty((0, 2)), np.empty(0), 0.0, LINEAR, 10.0,
                       True, 1, np.empty(0, dtype=np.int64))
    with pytest.raises(ValueError):
        BinarySvmModel(np.ones((1, 2)), np.array([11.0]), 0.0, LINEAR, 10.0,
                       True, 1, np.array([0]))


# ---------------------------------------------------------------------------
# One-vs-all multiclass

def test_multiclass_separable_blobs_are_learned_exactly():
    ds = three_blob_dataset()
    for spec in (LINEAR, KernelSpec(kind="poly", poly_c=1.0, poly_p=3),
                 KernelSpec(kind="rbf")):
        model = train_one_vs_all(ds, spec)
        assert model.method == f"svm-{spec.kind}"
        assert model.n_train == len(ds)
        preds = predict_many(model, ds.features)
        assert np.array_equal(preds, ds.labels)


def test_every_trained_binary_passes_the_kkt_audit():
    ds = three_blob_dataset(n_per=25)
    model = train_one_vs_all(ds, KernelSpec(kind="rbf"), c_reg=10.0,
                             tol=1e-3)
    for label, binary in enumerate(model.class_models):
        targets = np.where(ds.labels == label, 1.0, -1.0)
        assert binary.converged
        assert svm_kkt_violations(binary, ds.features, targets,
                                  tol=1e-3) == []


def test_predict_agrees_with_predict_many():
    ds = three_blob_dataset(n_per=15)
    model = train_one_vs_all(ds, KernelSpec(kind="rbf"))
    singles = [int(predict(model, x)) for x in ds.features]
    assert np.array_equal(predict_many(model, ds.features), singles)


def test_prediction_ties_take_the_smallest_label():
    sv = np.zeros((1, 2))
    idx = np.array([0])

    def flat(bias):
        return BinarySvmModel(sv, np.array([1.0]), bias, LINEAR, 10.0,
                              True, 1, idx)

    def multi(biases):
        return MultiClassSvmModel(
            class_models=tuple(flat(b) for b in biases),
            kernel=LINEAR, feature_names=("a", "b"),
            standardization=(np.zeros(2), np.ones(2)),
            c_reg=10.0, tol=1e-3, max_passes=600, seed=0, n_train=1)

    x = np.array([3.0, -2.0])  # k(origin, x) = 0 so decisions = biases
    assert int(predict(multi([0.0, 0.0, 0.0]), x)) == 0
    assert int(predict(multi([-1.0, 2.0, 2.0]), x)) == 1
    assert int(predict(multi([5.0, 1.0, 5.0]), x)) == 0


def test_train_one_vs_all_validation():
    ds = three_blob_dataset(n_per=10)
    raw = LabeledDataset(ds.features, ds.labels, ds.feature_names)
    with pytest.raises(ValueError):
        train_one_vs_all(raw, LINEAR)  # no standardization stats
    two_class = LabeledDataset(ds.features, np.where(ds.labels == 2, 0,
                                                     ds.labels),
                               ds.feature_names, ds.standardization)
    with pytest.raises(ValueError, match="2"):
        train_one_vs_all(two_class, LINEAR)


def test_training_is_deterministic():
    ds = three_blob_dataset(n_per=20)
    a = train_one_vs_all(ds, KernelSpec(kind="rbf"), seed=5)
    b = train_one_vs_all(ds, KernelSpec(kind="rbf"), seed=5)
    for ma, mb in zip(a.class_models, b.class_models):
        assert np.array_equal(ma.support_vectors, mb.support_vectors)
        assert np.array_equal(ma.coeffs, mb.coeffs)
        assert ma.bias == mb.bias
        assert ma.n_sweeps == mb.n_sweeps


# ---------------------------------------------------------------------------
# Serialization

def test_dict_round_trip_preserves_predictions():
    ds = three_blob_dataset(n_per=12)
    model = train_one_vs_all(ds, KernelSpec(kind="rbf"))
    clone = svm_from_dict(svm_to_dict(model))
    rng = np.random.default_rng(8)
    probes = rng.normal(0, 2, (100, 3))
    assert np.array_equal(predict_many(model, probes),
                          predict_many(clone, probes))
    assert clone.kernel == model.kernel
    assert clone.n_train == model.n_train


def test_save_load_file_round_trip(tmp_path):
    ds = three_blob_dataset(n_per=12)
    model = train_one_vs_all(ds, KernelSpec(kind="poly"))
    path = tmp_path / "model.json"
    save_svm(model, path)
    payload = json.loads(path.read_text())
    assert payload["model_type"] == "svm"
    assert len(payload["classes"]) == 3
    loaded = load_svm(path)
    probes = np.random.default_rng(1).normal(0, 2, (50, 3))
    assert np.array_equal(predict_many(model, probes),
                          predict_many(loaded, probes))
    # Saving twice produces identical bytes.
    again = tmp_path / "model2.json"
    save_svm(model, again)
    assert again.read_bytes() == path.read_bytes()
