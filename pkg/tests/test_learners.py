"""Learner implementations cross-checked against independent oracles."""

import json

import numpy as np
import pytest

from imitation_privacy import (
    LinearClassifier,
    classify,
    fit_logistic,
    fit_ols,
    fit_tree,
)
from imitation_privacy.learners import LOGISTIC_WEIGHT_BOUND
from imitation_privacy.rng import child_rng

from oracles import exhaustive_stump, normal_equations_ols


class TestOls:
    def test_identity_design(self):
        model = fit_ols(np.eye(3), [1.0, 2.0, 3.0])
        assert np.allclose(model.coefficients, [1.0, 2.0, 3.0], atol=1e-12)
        assert not model.rank_deficient

    def test_duplicated_column_sets_flag(self):
        X = np.column_stack([np.arange(5.0), np.arange(5.0)])
        model = fit_ols(X, np.arange(5.0))
        assert model.rank_deficient

    def test_noiseless_recovery(self):
        rng = child_rng(10, "ols")
        X = rng.normal(size=(50, 3))
        beta0 = np.array([1.5, -2.0, 0.25])
        model = fit_ols(X, X @ beta0)
        assert np.allclose(model.coefficients, beta0, atol=1e-8)

    def test_residual_orthogonality(self):
        rng = child_rng(11, "ols")
        X = rng.normal(size=(40, 4))
        y = rng.normal(size=40)
        model = fit_ols(X, y)
        resid = y - model.predict(X)
        rel = np.abs(X.T @ resid) / (np.linalg.norm(X, axis=0) * np.linalg.norm(y))
        assert rel.max() < 1e-8

    def test_matches_normal_equations_oracle(self):
        # brute-force elimination on X'X beta = X'y, small full-rank designs
        rng = child_rng(12, "ols-oracle")
        for trial in range(40):
            n = int(rng.integers(5, 21))
            p = int(rng.integers(1, 5))
            X = rng.integers(-2, 3, size=(n, p)).astype(float)
            if np.linalg.matrix_rank(X) < p:
                continue
            y = rng.integers(-2, 3, size=n).astype(float)
            model = fit_ols(X, y)
            assert np.allclose(model.coefficients, normal_equations_ols(X, y),
                               atol=1e-8)

    def test_intercept(self):
        X = np.arange(6.0).reshape(-1, 1)
        y = 2.0 * X[:, 0] + 5.0
        model = fit_ols(X, y, intercept=True)
        assert model.intercept == pytest.approx(5.0, abs=1e-9)
        assert model.coefficients[0] == pytest.approx(2.0, abs=1e-9)

    def test_json_round_trip(self):
        model = fit_ols(np.eye(2), [1.0, 2.0])
        doc = json.loads(model.to_json())
        assert doc["algorithm"] == "ols"
        assert doc["parameters"]["coefficients"] == [1.0, 2.0]


class TestLogistic:
    def test_symmetric_clusters_zero_bias(self):
        X = np.array([[-2.0], [-1.0], [-0.5], [0.5], [1.0], [2.0]])
        y = np.array([0.0, 0.0, 1.0, 0.0, 1.0, 1.0])
        model = fit_logistic(X, y)
        assert abs(model.bias) < 1e-3

    def test_random_labels_give_null_weights(self):
        rng = child_rng(13, "logistic-null")
        n = 10_000
        X = rng.normal(size=(n, 2))
        y = rng.integers(0, 2, size=n).astype(float)
        model = fit_logistic(X, y)
        assert np.linalg.norm(model.weights) < 0.05

    def test_consistency_1d(self):
        rng = child_rng(14, "logistic-truth")
        n = 100_000
        X = rng.normal(size=(n, 1))
        p = 1.0 / (1.0 + np.exp(-(2.0 * X[:, 0] - 1.0)))
        y = (rng.uniform(size=n) < p).astype(float)
        model = fit_logistic(X, y)
        assert abs(model.weights[0] - 2.0) < 5e-2
        assert abs(model.bias + 1.0) < 5e-2

    def test_loglik_non_decreasing(self):
        rng = child_rng(15, "logistic-trace")
        X = rng.normal(size=(200, 3))
        logits = X @ np.array([1.0, -1.0, 0.5])
        y = (rng.uniform(size=200) < 1 / (1 + np.exp(-logits))).astype(float)
        model = fit_logistic(X, y)
        trace = model.loglik_trace
        assert all(trace[i + 1] >= trace[i] - 1e-10 for i in range(len(trace) - 1))
        assert model.converged

    def test_separable_data_flags_divergence(self):
        X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
        y = np.array([0.0, 0.0, 1.0, 1.0])
        model = fit_logistic(X, y, max_iter=200)
        assert model.diverged
        w = np.append(model.weights, model.bias)
        assert np.linalg.norm(w) <= LOGISTIC_WEIGHT_BOUND + 1e-9

    def test_probabilities_in_open_interval(self):
        X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
        y = np.array([0.0, 0.0, 1.0, 1.0])
        model = fit_logistic(X, y, max_iter=200)
        probs = model.predict_proba(np.array([[-100.0], [100.0]]))
        assert np.all(probs > 0.0) and np.all(probs < 1.0)

    def test_rejects_nonbinary_labels(self):
        with pytest.raises(ValueError):
            fit_logistic(np.ones((3, 1)), [0.0, 0.5, 1.0])


class TestTree:
    def test_constant_labels_single_leaf(self):
        X = child_rng(16, "tree").normal(size=(10, 2))
        tree = fit_tree(X, np.full(10, 3.5), max_depth=4)
        assert tree.root.is_leaf and tree.root.value == 3.5

    @pytest.mark.parametrize(
        "hot,expected",
        [
            (2, [0.0, 0.0, 0.5, 0.0, 0.5, 0.0]),
            (3, [0.0, 0.5, 0.0, 0.5, 0.0, 0.0]),
        ],
    )
    def test_documented_stumps(self, hot, expected):
        X = np.array([[7.0], [1.0], [10.0], [5.0], [18.0], [9.0]])
        y = np.zeros(6)
        y[hot] = 1.0
        tree = fit_tree(X, y, max_depth=1)
        fitted = tree.predict(X)
        sse_oracle, feat, thr, fit_oracle = exhaustive_stump(X, y)
        assert np.allclose(fitted, fit_oracle, atol=1e-12)
        assert fitted.tolist() == expected
        assert float(np.sum((y - fitted) ** 2)) == pytest.approx(sse_oracle, abs=1e-12)

    def test_depth1_matches_exhaustive_search(self):
        rng = child_rng(17, "tree-oracle")
        for trial in range(30):
            n = int(rng.integers(4, 31))
            p = int(rng.integers(1, 4))
            X = rng.normal(size=(n, p))
            y = rng.normal(size=n)
            tree = fit_tree(X, y, max_depth=1)
            fitted = tree.predict(X)
            sse_oracle, feat, thr, fit_oracle = exhaustive_stump(X, y)
            sse = float(np.sum((y - fitted) ** 2))
            assert sse == pytest.approx(sse_oracle, abs=1e-9)
            # identical leaf membership, not merely equal SSE
            assert np.allclose(fitted, fit_oracle, atol=1e-9)

    def test_leaf_values_are_member_means(self):
        rng = child_rng(18, "tree-means")
        X = rng.normal(size=(60, 2))
        y = rng.normal(size=60)
        tree = fit_tree(X, y, max_depth=3, min_leaf=2)
        for leaf in tree.leaves():
            members = np.array(leaf.rows)
            assert abs(leaf.value - y[members].mean()) < 1e-12

    def test_every_row_reaches_its_leaf(self):
        rng = child_rng(19, "tree-routes")
        X = rng.normal(size=(40, 2))
        y = rng.normal(size=40)
        tree = fit_tree(X, y, max_depth=3)
        ids = tree.leaf_ids(X)
        for leaf in tree.leaves():
            for row in leaf.rows:
                assert ids[row] == leaf.leaf_id

    def test_min_leaf_respected(self):
        rng = child_rng(20, "tree-minleaf")
        X = rng.normal(size=(30, 2))
        y = rng.normal(size=30)
        tree = fit_tree(X, y, max_depth=5, min_leaf=7)
        assert all(len(leaf.rows) >= 7 for leaf in tree.leaves())

    def test_leaf_ids_unique(self):
        rng = child_rng(21, "tree-ids")
        X = rng.normal(size=(50, 3))
        y = rng.normal(size=50)
        tree = fit_tree(X, y, max_depth=4)
        ids = [leaf.leaf_id for leaf in tree.leaves()]
        assert len(ids) == len(set(ids))

    def test_json_contains_structure(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        tree = fit_tree(X, np.array([0.0, 0.0, 1.0, 1.0]), max_depth=1)
        doc = json.loads(tree.to_json())
        assert doc["parameters"]["threshold"] == 2.5


class TestLinearClassifier:
    def test_positive_halfspace(self):
        model = LinearClassifier(weights=np.array([1.0, 0.0]))
        assert classify(model, [2.0, 5.0]) == 1

    def test_negative_halfspace(self):
        model = LinearClassifier(weights=np.array([1.0, 0.0]))
        assert classify(model, [-2.0, 5.0]) == -1

    def test_boundary_tie_is_positive(self):
        model = LinearClassifier(weights=np.array([1.0, 0.0]))
        assert classify(model, [0.0, 5.0]) == 1

    def test_zero_weights_rejected(self):
        with pytest.raises(ValueError):
            LinearClassifier(weights=np.zeros(2))
