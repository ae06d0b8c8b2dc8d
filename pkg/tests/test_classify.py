import numpy as np
import pytest

from explet.classify import (LinearSvmModel, predict, predict_batch,
                             train_svm)
from explet.errors import DimMismatch, SingleClass

import oracles


def blobs(rng, n_per=20, centers=((4, 4), (-4, -4)), spread=1.0):
    X, y = [], []
    for label, c in enumerate(centers):
        X.append(rng.normal(c, spread, size=(n_per, len(c))))
        y.extend([label] * n_per)
    return np.vstack(X), np.array(y)


class TestTrainSvm:
    def test_separable_blobs_perfect_train_accuracy(self, rng):
        X, y = blobs(rng)
        model = train_svm(X, y, C=1.0)
        preds = predict_batch(model, X)
        assert np.mean(preds == y) == 1.0

    def test_three_class_separable(self, rng):
        X, y = blobs(rng, centers=((6, 0), (-6, 0), (0, 8)))
        model = train_svm(X, y)
        assert np.mean(predict_batch(model, X) == y) == 1.0

    def test_duplicated_training_set_is_deterministic(self, rng):
        X, y = blobs(rng, spread=2.5)
        m1 = train_svm(X, y)
        m2 = train_svm(X.copy(), y.copy())
        np.testing.assert_array_equal(m1.W, m2.W)

    def test_objective_matches_primal_subgradient_oracle(self, rng):
        X = rng.standard_normal((20, 5))
        y = np.where(rng.random(20) > 0.5, 1, 0)
        while np.unique(y).size < 2:
            y = np.where(rng.random(20) > 0.5, 1, 0)
        C = 1.0
        model = train_svm(X, y, C=C, normalize=False, max_epochs=5000,
                          gap_rel_tol=1e-9)
        # binary problem for class 0 (first row of W)
        yk = np.where(y == model.classes[0], 1.0, -1.0)
        Xb = np.hstack([X, np.ones((20, 1))])
        w = model.W[0]
        margins = np.clip(1.0 - yk * (Xb @ w), 0.0, None)
        ours = 0.5 * w @ w + C * np.sum(margins ** 2)
        _, ref = oracles.svm_primal_gd(Xb, yk, C, iters=300_000)
        assert abs(ours - ref) <= 1e-3

    def test_dual_objective_non_decreasing(self, rng):
        X, y = blobs(rng, spread=3.0)
        model = train_svm(X, y)
        for hist in model.dual_histories:
            assert np.all(np.diff(hist) >= -1e-9)

    def test_single_class_raises(self, rng):
        with pytest.raises(SingleClass):
            train_svm(rng.standard_normal((10, 3)), np.zeros(10, dtype=int))


class TestPredict:
    def test_boundary_tie_goes_to_lower_class(self):
        W = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])  # identical scores
        model = LinearSvmModel(classes=np.array([3, 8]), W=W, C=1.0,
                               normalize=False)
        assert predict(model, np.array([2.0, 5.0])) == 3

    def test_strict_max_wins(self):
        W = np.array([[1.0, 0.0], [2.0, 0.0], [0.5, 0.0]])
        model = LinearSvmModel(classes=np.array([0, 1, 2]), W=W, C=1.0,
                               normalize=False)
        assert predict(model, np.array([1.0])) == 1

    def test_matches_score_argmax_oracle(self, rng):
        X, y = blobs(rng, centers=((3, 1), (-2, 4), (0, -5)), spread=2.0)
        model = train_svm(X, y)
        pts = rng.standard_normal((100, 2))
        preds = predict_batch(model, pts)
        scores = model.decision_scores(pts)
        expect = model.classes[np.argmax(scores, axis=1)]
        np.testing.assert_array_equal(preds, expect)

    def test_feature_scaling_with_compensated_C(self, rng):
        # scaling all dims (bias included) by c with C' = C/c^2 rescales the
        # solution to w/c and leaves every decision value unchanged
        from explet import kernels
        X, y = blobs(rng)
        yk = np.where(y == 0, 1.0, -1.0)
        Xb = np.hstack([X, np.ones((len(y), 1))])
        c = 5.0
        w1, _, _, _ = kernels.svm_dual_cd(Xb, yk, 1.0, 5000, 1e-10)
        w2, _, _, _ = kernels.svm_dual_cd(c * Xb, yk, 1.0 / c ** 2, 5000, 1e-10)
        np.testing.assert_allclose(c * w2, w1, atol=1e-6)
        pts = np.hstack([rng.standard_normal((50, 2)) * 4, np.ones((50, 1))])
        np.testing.assert_array_equal(np.sign(pts @ w1), np.sign((c * pts) @ w2))

    def test_dim_mismatch(self, rng):
        X, y = blobs(rng)
        model = train_svm(X, y)
        with pytest.raises(DimMismatch):
            predict(model, np.zeros(5))
