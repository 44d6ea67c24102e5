import numpy as np
import pytest

from graphem.metrics import EdgeScores, aggregate, edge_scores, rmse, score_row
from graphem.model import block_mask


def test_rmse_is_relative_frobenius():
    A_true = np.array([[3.0, 0.0], [0.0, 4.0]])
    assert rmse(A_true, A_true) == 0.0
    assert rmse(np.zeros((2, 2)), A_true) == pytest.approx(1.0)
    assert rmse(A_true + np.array([[0.5, 0.0], [0.0, 0.0]]), A_true) == pytest.approx(0.1)


def test_rmse_rejects_zero_truth_and_shape_mismatch():
    with pytest.raises(ValueError):
        rmse(np.eye(2), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        rmse(np.eye(2), np.eye(3))


def test_dense_estimate_against_three_blocks():
    truth = block_mask((3, 3, 3)).astype(float)
    scores = edge_scores(np.ones((9, 9)), truth)
    assert scores.precision == pytest.approx(1 / 3)
    assert scores.recall == 1.0
    assert scores.specificity == 0.0
    assert scores.accuracy == pytest.approx(1 / 3)
    assert (scores.tp, scores.fp, scores.tn, scores.fn) == (27, 54, 0, 0)


def test_dense_estimate_against_four_blocks():
    truth = block_mask((3, 5, 5, 3)).astype(float)
    scores = edge_scores(np.ones((16, 16)), truth)
    assert scores.precision == pytest.approx(68 / 256)
    assert round(scores.precision, 4) == 0.2656


def test_perfect_recovery():
    truth = np.diag([0.5, -0.3, 0.9])
    scores = edge_scores(truth, truth)
    assert scores.accuracy == scores.precision == scores.recall == scores.specificity == scores.f1 == 1.0


def test_threshold_decides_support():
    truth = np.eye(2)
    estimate = np.array([[1.0, 1e-12], [1e-3, 1.0]])
    assert edge_scores(estimate, truth).fp == 1
    assert edge_scores(estimate, truth, threshold=1e-2).fp == 0


def test_zero_denominators_give_zero():
    scores = edge_scores(np.zeros((2, 2)), np.eye(2))
    assert scores.precision == 0.0
    assert scores.recall == 0.0
    assert scores.f1 == 0.0
    assert scores.specificity == 1.0
    assert EdgeScores.from_counts(0, 0, 0, 0).accuracy == 0.0


def test_score_row_has_rmse_and_edges():
    row = score_row(np.eye(2), np.eye(2))
    assert row["rmse"] == 0.0
    assert row["f1"] == 1.0


def test_aggregate_mean_and_sample_std():
    frame = aggregate([{"rmse": 1.0, "f1": 0.5}, {"rmse": 3.0, "f1": 0.5}])
    assert frame.loc["mean", "rmse"] == 2.0
    assert frame.loc["std", "rmse"] == pytest.approx(np.sqrt(2.0))
    assert frame.loc["std", "f1"] == 0.0


def test_aggregate_single_row_has_zero_std():
    frame = aggregate([EdgeScores.from_counts(1, 1, 1, 1)])
    assert frame.loc["mean", "accuracy"] == 0.5
    assert (frame.loc["std"] == 0.0).all()


def test_aggregate_needs_rows():
    with pytest.raises(ValueError):
        aggregate([])


def test_edge_scores_ignore_node_order(rng):
    truth = block_mask((2, 3)) * rng.uniform(0.2, 0.9, size=(5, 5))
    estimate = truth + 0.05 * (rng.random((5, 5)) < 0.3)
    perm = rng.permutation(5)
    shuffled = edge_scores(estimate[np.ix_(perm, perm)], truth[np.ix_(perm, perm)])
    assert shuffled == edge_scores(estimate, truth)


def test_rmse_ignores_a_common_scale(rng):
    truth = rng.standard_normal((4, 4))
    estimate = truth + 0.1 * rng.standard_normal((4, 4))
    for c in (-3.0, 0.01, 7.5):
        assert rmse(c * estimate, c * truth) == pytest.approx(rmse(estimate, truth), rel=1e-12)
