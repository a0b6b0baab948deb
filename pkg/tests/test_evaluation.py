import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoflow.checks import metric_bounds, triangle, upper_bound
from geoflow.errors import EmptyEvaluation, InsufficientPairs
from geoflow.evaluation import (
    ConfusionMatrix,
    check_upper_bound,
    iou_from_counts,
    miou,
    triangle_probe,
    validate_linear_hypothesis,
)
from geoflow.gfk import build_kernel, identity_kernel
from geoflow.scene.render import VOID
from geoflow.subspace import Subspace, random_subspace


def test_perfect_prediction():
    truth = np.array([[0, 1], [2, 2]])
    res = miou(ConfusionMatrix.from_labels(truth, truth, 3))
    assert res["per_class_iou"] == [1.0, 1.0, 1.0]
    assert res["miou"] == 1.0


def test_hand_example_375():
    res = iou_from_counts([50, 25], [100, 100])
    assert res["per_class_iou"] == [0.5, 0.25]
    assert res["miou"] == 0.375


def test_zero_union_class_excluded():
    truth = np.array([0, 0, 1, 1])
    pred = np.array([0, 1, 1, 1])
    res = miou(ConfusionMatrix.from_labels(truth, pred, 3))
    assert res["per_class_iou"][2] is None
    # class 0: 1/2, class 1: 2/3; class 2 counts neither as 0 nor as 1
    assert res["miou"] == pytest.approx((0.5 + 2 / 3) / 2, abs=1e-15)


def test_confusion_counts_and_void():
    truth = np.array([0, 1, VOID, 1])
    pred = np.array([0, 0, 1, 1])
    conf = ConfusionMatrix.from_labels(truth, pred, 2)
    np.testing.assert_array_equal(conf.counts, [[1, 0], [1, 1]])
    assert conf.total == 3
    assert conf.merge(conf).total == 6


def test_confusion_validation():
    with pytest.raises(ValueError):
        ConfusionMatrix(np.array([[1, -1], [0, 0]]))
    with pytest.raises(ValueError):
        ConfusionMatrix(np.ones((2, 3)))


def test_empty_evaluation():
    with pytest.raises(EmptyEvaluation):
        miou(np.zeros((3, 3), dtype=int))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_miou_relabel_invariant(seed):
    rng = np.random.default_rng(seed)
    truth, pred = rng.integers(0, 4, 200), rng.integers(0, 4, 200)
    perm = rng.permutation(4)
    a = miou(ConfusionMatrix.from_labels(truth, pred, 4))["miou"]
    b = miou(ConfusionMatrix.from_labels(perm[truth], perm[pred], 4))["miou"]
    assert a == pytest.approx(b, abs=1e-15)
    assert 0.0 <= a <= 1.0


def test_upper_bound_examples(rng):
    res = upper_bound(n_tuples=10_000, dim=32, sub_dim=8, alpha=1.5)
    assert res["n_checked"] == 10_000
    assert res["max_violation"] <= 1e-9
    kx = build_kernel(random_subspace(rng, 8, 2), random_subspace(rng, 8, 2))
    ky = build_kernel(random_subspace(rng, 6, 2), random_subspace(rng, 6, 2))
    xs, xt = rng.standard_normal((5, 8)), rng.standard_normal((5, 8))
    ys, yt = rng.standard_normal((5, 6)), rng.standard_normal((5, 6))
    same = check_upper_bound(kx, ky, [xs, xt, xt, ys, yt, yt], 1.5)
    np.testing.assert_allclose(same["rhs"] - same["lhs"], 5.0, atol=1e-12)


def test_metric_bounds_suite():
    res = metric_bounds(n_pairs=2000, n_kernels=3)
    assert -1e-12 <= res["min"] and res["max"] <= 2 + 1e-12
    assert res["self_max"] <= 1e-9


def test_triangle_probe_collinear_has_no_violations():
    e = np.eye(4)
    P = Subspace(e[:, :2])
    k = build_kernel(P, P)
    direction = np.array([1.0, 2.0, 0.0, 0.0])

    def collinear(rng, n):
        return rng.choice([-1.0, 1.0], (n, 1)) * rng.uniform(0.1, 5.0, (n, 1)) * direction

    res = triangle_probe(k, 1000, sampler=collinear)
    assert res["violation_rate"] == 0.0


def test_triangle_probe_diagnostic():
    res = triangle(n_triples=20_000)
    assert 0.0 <= res["violation_rate"] <= 1.0
    assert res["n_triples"] == 20_000
    with pytest.raises(ValueError):
        triangle_probe(identity_kernel(3), 0)


def test_hypothesis_identical_spaces(rng):
    X_s, X_t = rng.standard_normal((40, 10)), rng.standard_normal((40, 10))
    k = build_kernel(random_subspace(rng, 10, 3), random_subspace(rng, 10, 3))
    res = validate_linear_hypothesis(X_s, X_t, X_s.copy(), X_t.copy(), k, k)
    assert res["slope"] == pytest.approx(1.0, abs=1e-6)
    assert res["pearson_r"] == pytest.approx(1.0, abs=1e-6)
    assert res["samples"] == 1600


def test_hypothesis_degenerate_views(rng):
    # identical views of identical scenes: every distance vanishes
    k = identity_kernel(6)
    flat = np.repeat(rng.standard_normal((1, 6)), 30, axis=0)
    res = validate_linear_hypothesis(flat, flat, flat, flat, k, k)
    assert res["degenerate"] is True
    assert res["pearson_r"] is None
    np.testing.assert_allclose(res["dx"], 0.0, atol=1e-12)


def test_hypothesis_needs_pairs(rng):
    X = rng.standard_normal((10, 6))
    k = identity_kernel(6)
    with pytest.raises(InsufficientPairs):
        validate_linear_hypothesis(X, X, X, X, k, k)


def test_hypothesis_sampled_pairs(rng):
    X_s, X_t = rng.standard_normal((40, 10)), rng.standard_normal((40, 10))
    k = identity_kernel(10)
    res = validate_linear_hypothesis(X_s, X_t, X_s, X_t, k, k, n_pairs=500, seed=3)
    assert res["samples"] == 500
