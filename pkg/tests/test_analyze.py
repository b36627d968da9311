import numpy as np
import pytest
from scipy.linalg import orthogonal_procrustes
from scipy.spatial.distance import cdist

import oracles
from proxforest.analyze import (
    ISOLATED_SENTINEL,
    classical_mds,
    outlier_scores,
    write_embedding_csv,
    write_outlier_csv,
)
from proxforest.forest import ForestConfig, fit
from proxforest.gap import GapMatrix, compute_oob_proximities

from conftest import random_vector_dataset


def square_gap(p):
    """Wrap a dense symmetric proximity array as a covered OOB GapMatrix."""
    n = p.shape[0]
    rows = {i: {j: float(p[i, j]) for j in range(n) if p[i, j] > 0} for i in range(n)}
    return GapMatrix("oob", rows, n)


class TestOutlierScores:
    def test_low_proximity_point_scores_highest(self):
        # point 3 is weakly connected to its class; raw = 1 / sum(p^2)
        p = np.array([
            [0.0, 0.4, 0.4, 0.1],
            [0.4, 0.0, 0.4, 0.1],
            [0.4, 0.4, 0.0, 0.1],
            [0.1, 0.1, 0.1, 0.0],
        ])
        rep = outlier_scores(square_gap(p), ["a"] * 4, top_q=1)
        assert rep.raw[3] == pytest.approx(1.0 / (3 * 0.01))
        assert np.argmax(rep.raw) == 3
        assert rep.flagged == [3]
        assert np.all(rep.normalized >= 0.0)

    def test_isolated_point_gets_sentinel(self):
        p = np.zeros((3, 3))
        p[0, 1] = p[1, 0] = 0.5
        rep = outlier_scores(square_gap(p), ["a"] * 3, top_q=1)
        assert rep.raw[2] == ISOLATED_SENTINEL

    def test_small_class_skips_normalization(self):
        p = np.array([[0.0, 0.5], [0.5, 0.0]])
        rep = outlier_scores(square_gap(p), ["a", "a"], top_q=1)
        assert np.isnan(rep.normalized).all()
        assert len(rep.flagged) == 1

    def test_cross_class_proximity_ignored(self):
        # identical within-class structure; class-b weights must not matter
        p1 = np.array([
            [0.0, 0.3, 0.3, 0.0],
            [0.3, 0.0, 0.3, 0.0],
            [0.3, 0.3, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0],
        ])
        p2 = p1.copy()
        p2[0, 3] = p2[3, 0] = 0.9
        r1 = outlier_scores(square_gap(p1), ["a", "a", "a", "b"], top_q=1)
        r2 = outlier_scores(square_gap(p2), ["a", "a", "a", "b"], top_q=1)
        np.testing.assert_array_equal(r1.raw[:3], r2.raw[:3])

    def test_on_fitted_forest(self, rng, tmp_path):
        d = random_vector_dataset(rng, 40, 4, n_classes=2)
        model = fit(d, ForestConfig(n_trees=11, seed=0))
        gap = compute_oob_proximities(model)
        rep = outlier_scores(gap, d.targets, top_q=3)
        assert len(rep.flagged) <= 6  # top 3 per class
        path = tmp_path / "out.csv"
        write_outlier_csv(rep, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "id,class,raw,normalized,flag"
        assert len(lines) == len(rep.indices) + 1


class TestClassicalMds:
    def test_recovers_planar_configuration(self, rng):
        pts = rng.normal(size=(25, 2))
        dis = cdist(pts, pts)
        coords, eigvals = classical_mds(dis, 2)
        a = coords - coords.mean(axis=0)
        b = pts - pts.mean(axis=0)
        rot, _ = orthogonal_procrustes(a, b)
        assert np.abs(a @ rot - b).max() < 1e-6
        assert eigvals[0] >= eigvals[1] > 0

    def test_matches_full_eigendecomposition(self, rng):
        pts = rng.normal(size=(15, 3))
        dis = cdist(pts, pts)
        coords, _ = classical_mds(dis, 3)
        ref = oracles.classical_mds_eigh(dis, 3)
        for k in range(3):  # eigenvector sign is arbitrary in the reference
            col = ref[:, k] if ref[:, k] @ coords[:, k] >= 0 else -ref[:, k]
            np.testing.assert_allclose(coords[:, k], col, atol=1e-7)

    def test_deterministic(self, rng):
        pts = rng.normal(size=(12, 2))
        dis = cdist(pts, pts)
        a, _ = classical_mds(dis, 2)
        b, _ = classical_mds(dis, 2)
        np.testing.assert_array_equal(a, b)

    def test_non_euclidean_warns_and_zeroes(self):
        # strongly non-Euclidean: near-zero diagonal blocks, all eigenvalues
        # of B beyond the first few are negative
        dis = 1.0 - np.eye(4)
        dis[0, 1] = dis[1, 0] = 3.0
        with pytest.warns(UserWarning, match="negative eigenvalue"):
            coords, eigvals = classical_mds(dis, 4)
        assert (eigvals == 0.0).any()
        assert np.isfinite(coords).all()

    def test_validation(self):
        with pytest.raises(ValueError, match="symmetric"):
            classical_mds(np.array([[0.0, 1.0], [2.0, 0.0]]), 1)
        with pytest.raises(ValueError, match="diagonal"):
            classical_mds(np.array([[1.0, 0.0], [0.0, 0.0]]), 1)
        with pytest.raises(ValueError, match="exceeds"):
            classical_mds(np.zeros((2, 2)), 3)
        with pytest.raises(ValueError, match="square"):
            classical_mds(np.zeros((2, 3)), 1)

    def test_embedding_csv(self, rng, tmp_path):
        pts = rng.normal(size=(5, 2))
        coords, _ = classical_mds(cdist(pts, pts), 2)
        path = tmp_path / "emb.csv"
        write_embedding_csv(coords, path, uid=lambda i: f"u{i}")
        lines = path.read_text().splitlines()
        assert lines[0] == "id,x1,x2"
        assert lines[1].startswith("u0,")
