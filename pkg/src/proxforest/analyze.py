"""Proximity-derived analytics: outlier scores and classical MDS embedding."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .gap import symmetrize

#: ordered above every finite raw score; reported for fully isolated points
ISOLATED_SENTINEL = math.inf


@dataclass
class OutlierReport:
    indices: list  # training indices, aligned with the arrays below
    labels: list
    raw: np.ndarray
    normalized: np.ndarray  # NaN where class normalization was skipped
    flagged: list  # top-q per class, as training indices


def outlier_scores(gap, targets, top_q=3):
    """Within-class proximity outlier measure over a symmetrized OOB matrix.

    raw(i) = 1 / sum of squared within-class symmetric proximities; normalized
    per class by (raw - median) / MAD, clamped below at zero.  Classes with
    fewer than 3 covered members skip normalization (raw is still reported).
    """
    idx, p = symmetrize(gap)
    labels = [targets[i] for i in idx]
    n = len(idx)
    raw = np.empty(n)
    for a in range(n):
        mask = np.array([labels[b] == labels[a] and b != a for b in range(n)])
        denom = float(np.sum(p[a, mask] ** 2))
        raw[a] = ISOLATED_SENTINEL if denom == 0.0 else 1.0 / denom

    normalized = np.full(n, np.nan)
    flagged = []
    for cls in sorted(set(labels), key=str):
        members = np.array([a for a in range(n) if labels[a] == cls])
        if members.size < 3:
            order = members[np.argsort(-raw[members], kind="stable")]
            flagged.extend(int(idx[a]) for a in order[:top_q])
            continue
        r = raw[members]
        finite = r[np.isfinite(r)]
        med = float(np.median(finite)) if finite.size else 0.0
        mad = float(np.median(np.abs(finite - med))) if finite.size else 1.0
        if mad == 0.0:
            mad = float(np.mean(np.abs(finite - med))) or 1.0
        normalized[members] = np.clip((r - med) / mad, 0.0, None)
        order = members[np.argsort(-normalized[members], kind="stable")]
        flagged.extend(int(idx[a]) for a in order[:top_q])

    return OutlierReport([int(i) for i in idx], labels, raw, normalized, flagged)


def write_outlier_csv(report, path, uid=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "class", "raw", "normalized", "flag"])
        flagged = set(report.flagged)
        for k, i in enumerate(report.indices):
            rid = uid(i) if uid else i
            writer.writerow(
                [
                    rid,
                    report.labels[k],
                    repr(float(report.raw[k])),
                    "" if np.isnan(report.normalized[k]) else repr(float(report.normalized[k])),
                    int(i in flagged),
                ]
            )


def _power_iteration(b, start, tol=1e-10, max_iter=10_000):
    v = start / np.linalg.norm(start)
    lam = 0.0
    for _ in range(max_iter):
        w = b @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0, v
        w /= norm
        if w @ v < 0:
            w = -w  # track the eigenvector through sign flips
        if np.linalg.norm(w - v) < tol:
            v = w
            break
        v = w
    lam = float(v @ (b @ v))
    return lam, v


def _start_vector(n, k):
    # deterministic, dense in every eigenbasis for generic B
    return np.sin(np.arange(1, n + 1) * (k + 1) * 0.7391) + 1e-3


def classical_mds(dissim, dims):
    """Torgerson double-centering plus deterministic power iteration.

    Negative eigenvalues among the top ``dims`` are truncated to zero with a
    warning (the input dissimilarities were not Euclidean-embeddable).
    """
    d = np.asarray(dissim, dtype=np.float64)
    n = d.shape[0]
    if d.shape != (n, n):
        raise ValueError("dissimilarity matrix must be square")
    if dims > n:
        raise ValueError(f"dims={dims} exceeds N={n}")
    if not np.allclose(d, d.T, atol=1e-12):
        raise ValueError("dissimilarity matrix must be symmetric")
    if np.any(np.abs(np.diag(d)) > 1e-12):
        raise ValueError("dissimilarity matrix must have a zero diagonal")

    j = np.eye(n) - np.ones((n, n)) / n
    b = -0.5 * j @ (d ** 2) @ j
    b = 0.5 * (b + b.T)  # remove asymmetric float noise

    coords = np.zeros((n, dims))
    eigvals = np.zeros(dims)
    deflated = b.copy()
    for k in range(dims):
        lam, v = _power_iteration(deflated, _start_vector(n, k))
        deflated = deflated - lam * np.outer(v, v)  # deflate negatives too
        if lam <= 0.0:
            if lam < -1e-12:
                warnings.warn(
                    f"negative eigenvalue {lam:.3e} at dimension {k}; coordinate zeroed"
                )
            eigvals[k] = 0.0
            continue
        # deterministic sign: largest-magnitude component positive
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        eigvals[k] = lam
        coords[:, k] = v * np.sqrt(lam)
    return coords, eigvals


def write_embedding_csv(coords, path, uid=None):
    coords = np.asarray(coords)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"x{k + 1}" for k in range(coords.shape[1])])
        for i, row in enumerate(coords):
            rid = uid(i) if uid else i
            writer.writerow([rid] + [repr(float(v)) for v in row])
