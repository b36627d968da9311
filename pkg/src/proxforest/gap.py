"""GAP proximities over a fitted forest.

For a point i that is out-of-sample in tree t, its proximity mass lands on the
in-bag cohort of the leaf it routes to, weighted by bootstrap multiplicity and
normalized by the cohort size, then averaged over the trees where i is
out-of-sample.  Every emitted row is row-stochastic by construction, and the
proximity-weighted vote reproduces the forest's out-of-sample prediction.
"""

from __future__ import annotations

import csv

import numpy as np

from .data import CLASSIFICATION
from .forest import argmax_tied_low

OOB = "oob"
TEST = "test"


class GapMatrix:
    """Row-indexed sparse proximity matrix (rows -> {train column: weight})."""

    def __init__(self, kind, rows, n_cols, uncovered=()):
        self.kind = kind
        self.rows = rows
        self.n_cols = n_cols
        self.uncovered = list(uncovered)

    def row_indices(self):
        return sorted(self.rows)

    def row_sum(self, i):
        return float(sum(self.rows[i].values()))

    def dense(self):
        """Dense array over all row indices 0..max; absent entries are zero."""
        n_rows = (max(self.rows) + 1) if self.rows else 0
        out = np.zeros((n_rows, self.n_cols))
        for i, row in self.rows.items():
            for j, v in row.items():
                out[i, j] = v
        return out


def _accumulate(forest, inst, tree_indices):
    acc = {}
    inv_s = 1.0 / len(tree_indices)
    for t in tree_indices:
        leaf = forest.route(t, inst)
        inv_m = inv_s / leaf.size
        for j, c in zip(leaf.donor_ids, leaf.donor_mult):
            j = int(j)
            acc[j] = acc.get(j, 0.0) + c * inv_m
    return acc


def compute_oob_proximities(forest):
    """OOB-to-in-bag GAP rows; rows with an empty tree set S_i are omitted."""
    sets = forest.oob_tree_sets()
    rows = {}
    uncovered = []
    for i, s in enumerate(sets):
        if not s:
            uncovered.append(i)
            continue
        rows[i] = _accumulate(forest, forest.train.instances[i], s)
    return GapMatrix(OOB, rows, forest.n_train, uncovered)


def compute_test_proximities(forest, test):
    """Test-to-train GAP rows; a test instance is out-of-sample in every tree."""
    if test.kind != forest.train.kind:
        raise ValueError(
            f"payload kind mismatch: forest trained on {forest.train.kind!r}, test is {test.kind!r}"
        )
    all_trees = list(range(len(forest.trees)))
    rows = {
        i: _accumulate(forest, inst, all_trees) for i, inst in enumerate(test.instances)
    }
    return GapMatrix(TEST, rows, forest.n_train)


def proximity_weighted_prediction(gap, train):
    """Per row: proximity-weighted majority vote (classification) or mean.

    Returns a dict row index -> predicted target; ties break to the lowest
    class label, matching the forest's own vote.
    """
    out = {}
    if train.task == CLASSIFICATION:
        y_enc = train.encoded_targets()
        k = len(train.class_labels)
        for i, row in gap.rows.items():
            scores = np.zeros(k)
            for j, p in row.items():
                scores[y_enc[j]] += p
            out[i] = train.class_labels[argmax_tied_low(scores)]
    else:
        y = np.asarray(train.targets, dtype=np.float64)
        for i, row in gap.rows.items():
            out[i] = float(sum(p * y[j] for j, p in row.items()))
    return out


def symmetrize(gap):
    """Symmetric proximities over covered rows of a square OOB matrix.

    Returns (row index list, dense symmetric array clamped to [0, 1]).
    """
    if gap.kind != OOB:
        raise ValueError("symmetrization is defined for square OOB matrices")
    idx = gap.row_indices()
    pos = {i: k for k, i in enumerate(idx)}
    n = len(idx)
    p = np.zeros((n, n))
    for i, row in gap.rows.items():
        for j, v in row.items():
            if j in pos:
                p[pos[i], pos[j]] = v
    p = np.clip(0.5 * (p + p.T), 0.0, 1.0)
    return idx, p


def symmetrize_and_dissimilarity(gap):
    """d(i, j) = sqrt(1 - p_sym(i, j)) with a zero diagonal."""
    idx, p = symmetrize(gap)
    d = np.sqrt(np.clip(1.0 - p, 0.0, 1.0))
    np.fill_diagonal(d, 0.0)
    return idx, d


def write_triplets(gap, path, row_uid=None, col_uid=None):
    """Sparse text export: one `row col value` line per nonzero entry."""
    with open(path, "w", encoding="utf-8") as fh:
        for i in gap.row_indices():
            ri = row_uid(i) if row_uid else i
            for j in sorted(gap.rows[i]):
                cj = col_uid(j) if col_uid else j
                fh.write(f"{ri} {cj} {float(gap.rows[i][j])!r}\n")


def write_dense_csv(matrix, path, index=None):
    """Dense CSV export for small matrices (proximity or dissimilarity)."""
    matrix = np.asarray(matrix)
    if matrix.shape[0] > 2000:
        raise ValueError("dense CSV export is limited to 2000 rows; use triplets")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["id"] + [str(j) for j in (index or range(matrix.shape[1]))]
        writer.writerow(header)
        for k, row in enumerate(matrix):
            rid = index[k] if index else k
            writer.writerow([rid] + [repr(float(v)) for v in row])
