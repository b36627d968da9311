import numpy as np
import pytest

import oracles
from proxforest.data import CLASSIFICATION, REGRESSION
from proxforest.forest import Forest, ForestConfig, Leaf, Tree, fit
from proxforest.gap import (
    GapMatrix,
    compute_oob_proximities,
    compute_test_proximities,
    proximity_weighted_prediction,
    symmetrize,
    symmetrize_and_dissimilarity,
    write_dense_csv,
    write_triplets,
)

from conftest import random_vector_dataset, vector_dataset


def manual_single_leaf_forest():
    """One tree, everyone in one leaf.  In-bag multiset {1, 1, 2}; 0 is OOB."""
    d = vector_dataset([[0.0], [1.0], [2.0]], ["a", "b", "b"])
    y = d.encoded_targets()
    members = np.array([1, 1, 2], dtype=np.intp)
    leaf = Leaf(members, y, 2, CLASSIFICATION, "pure")
    tree = Tree(leaf, np.array([0, 2, 1]), depth=0, n_nodes=1, leaves=[leaf])
    cfg = ForestConfig(n_trees=1, seed=0)
    return Forest(cfg, d, y, [tree], measures=[None]), d


class TestHandExample:
    def test_leaf_multiplicity_weights(self):
        # p(0, 1) = c_1/|M| = 2/3 and p(0, 2) = 1/3 with a single tree
        forest, _ = manual_single_leaf_forest()
        gap = compute_oob_proximities(forest)
        assert gap.rows == {0: {1: pytest.approx(2 / 3), 2: pytest.approx(1 / 3)}}
        assert gap.uncovered == [1, 2]  # in-bag in the only tree: empty S_i

    def test_vote_follows_weights(self):
        forest, d = manual_single_leaf_forest()
        gap = compute_oob_proximities(forest)
        assert proximity_weighted_prediction(gap, d) == {0: "b"}


class TestOobProximities:
    def test_rows_stochastic(self, rng):
        d = random_vector_dataset(rng, 40, 4, n_classes=3)
        model = fit(d, ForestConfig(n_trees=9, seed=0))
        gap = compute_oob_proximities(model)
        for i in gap.row_indices():
            assert gap.row_sum(i) == pytest.approx(1.0, abs=1e-12)

    def test_uncovered_rows_omitted(self, rng):
        d = random_vector_dataset(rng, 20, 3)
        model = fit(d, ForestConfig(n_trees=1, seed=1))
        gap = compute_oob_proximities(model)
        oob = set(model.trees[0].oob_ids.tolist())
        assert set(gap.rows) == oob
        assert set(gap.uncovered) == set(range(20)) - oob

    def test_matches_straight_line_oracle(self, rng):
        for trial in range(10):
            d = random_vector_dataset(np.random.default_rng(trial), 8, 3, n_classes=2)
            model = fit(d, ForestConfig(n_trees=3, seed=trial))
            gap = compute_oob_proximities(model)
            expected = oracles.gap_rows(model)
            assert set(gap.rows) == set(expected)
            for i, row in expected.items():
                assert set(gap.rows[i]) == set(row)
                for j, v in row.items():
                    assert gap.rows[i][j] == pytest.approx(v, abs=1e-14)

    def test_reconstruction_classification(self, rng):
        d = random_vector_dataset(rng, 50, 4, n_classes=3)
        model = fit(d, ForestConfig(n_trees=11, seed=2))
        gap = compute_oob_proximities(model)
        votes = proximity_weighted_prediction(gap, d)
        preds, covered = model.predict_oob()
        for i, label in votes.items():
            assert covered[i]
            assert preds[i] == label

    def test_reconstruction_regression(self, rng):
        d = random_vector_dataset(rng, 40, 3, task=REGRESSION)
        model = fit(d, ForestConfig(n_trees=7, task=REGRESSION, purity="variance", seed=3))
        gap = compute_oob_proximities(model)
        votes = proximity_weighted_prediction(gap, d)
        preds, _ = model.predict_oob()
        for i, value in votes.items():
            assert value == pytest.approx(preds[i], abs=1e-10)


class TestTestProximities:
    def test_rows_stochastic_and_complete(self, rng):
        d = random_vector_dataset(rng, 30, 4, n_classes=2)
        q = random_vector_dataset(np.random.default_rng(5), 12, 4)
        model = fit(d, ForestConfig(n_trees=6, seed=4))
        gap = compute_test_proximities(model, q)
        assert gap.kind == "test"
        assert set(gap.rows) == set(range(12))
        for i in range(12):
            assert gap.row_sum(i) == pytest.approx(1.0, abs=1e-12)

    def test_vote_matches_forest_prediction(self, rng):
        d = random_vector_dataset(rng, 30, 4, n_classes=3)
        q = random_vector_dataset(np.random.default_rng(6), 15, 4)
        model = fit(d, ForestConfig(n_trees=11, seed=5))
        gap = compute_test_proximities(model, q)
        votes = proximity_weighted_prediction(gap, d)
        preds = model.predict_many(q.instances)
        assert [votes[i] for i in range(15)] == preds

    def test_kind_mismatch(self, rng):
        from proxforest.bench import make_series_classes
        d = random_vector_dataset(rng, 20, 3)
        model = fit(d, ForestConfig(n_trees=3, seed=6))
        with pytest.raises(ValueError, match="kind"):
            compute_test_proximities(model, make_series_classes(3, seed=0))


class TestSymmetrize:
    def test_symmetric_and_bounded(self, rng):
        d = random_vector_dataset(rng, 30, 3, n_classes=2)
        model = fit(d, ForestConfig(n_trees=8, seed=7))
        gap = compute_oob_proximities(model)
        idx, p = symmetrize(gap)
        np.testing.assert_allclose(p, p.T)
        assert p.min() >= 0.0 and p.max() <= 1.0

    def test_dissimilarity_diagonal_zero(self, rng):
        d = random_vector_dataset(rng, 25, 3, n_classes=2)
        model = fit(d, ForestConfig(n_trees=8, seed=8))
        gap = compute_oob_proximities(model)
        idx, dis = symmetrize_and_dissimilarity(gap)
        np.testing.assert_array_equal(np.diag(dis), 0.0)
        np.testing.assert_allclose(dis, np.sqrt(
            np.clip(1.0 - symmetrize(gap)[1], 0, 1)) * (1 - np.eye(len(idx))), atol=1e-15)

    def test_rejects_test_matrices(self):
        gap = GapMatrix("test", {0: {0: 1.0}}, 1)
        with pytest.raises(ValueError, match="OOB"):
            symmetrize(gap)


class TestExports:
    def test_triplets_roundtrip(self, tmp_path):
        gap = GapMatrix("oob", {0: {1: 0.25, 2: 0.75}, 2: {0: 1.0}}, 3)
        path = tmp_path / "prox.txt"
        write_triplets(gap, path)
        lines = path.read_text().splitlines()
        assert lines == ["0 1 0.25", "0 2 0.75", "2 0 1.0"]
        parsed = [(int(a), int(b), float(c)) for a, b, c in
                  (line.split() for line in lines)]
        assert sum(v for i, _, v in parsed if i == 0) == 1.0

    def test_dense_csv(self, tmp_path):
        path = tmp_path / "d.csv"
        write_dense_csv(np.array([[0.0, 0.5], [0.5, 0.0]]), path, index=["a", "b"])
        lines = path.read_text().splitlines()
        assert lines[0] == "id,a,b"
        assert lines[1].startswith("a,0.0,0.5")

    def test_dense_size_cap(self, tmp_path):
        with pytest.raises(ValueError, match="2000"):
            write_dense_csv(np.zeros((2001, 2)), tmp_path / "d.csv")
