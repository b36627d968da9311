"""Brute-force k-nearest-neighbor baseline: classify, regress, and impute."""

from __future__ import annotations

import numpy as np

from ..data import CLASSIFICATION
from ..distances import registry_resolve
from ..forest import argmax_tied_low
from ..impute import _masked_euclidean


def _neighbor_order(measure, query, pool, counter=None):
    dists = np.array([measure(query, inst) for inst in pool])
    if counter is not None:
        counter.add(len(pool))
    return np.argsort(dists, kind="stable"), dists


def knn_predict(train, instances, k, spec, counter=None):
    """Plurality vote (classification) or mean (regression) over the k nearest."""
    if k < 1 or k > train.n:
        raise ValueError(f"k={k} out of range for N={train.n}")
    measure = registry_resolve(spec)
    preds = []
    if train.task == CLASSIFICATION:
        y_enc = train.encoded_targets()
        m = len(train.class_labels)
        for q in instances:
            order, _ = _neighbor_order(measure, q, train.instances, counter)
            counts = np.bincount(y_enc[order[:k]], minlength=m).astype(float)
            preds.append(train.class_labels[argmax_tied_low(counts)])
    else:
        y = np.asarray(train.targets, dtype=np.float64)
        for q in instances:
            order, _ = _neighbor_order(measure, q, train.instances, counter)
            preds.append(float(np.mean(y[order[:k]])))
    return preds


def knn_impute(reference, target, k):
    """Fill target's missing entries from reference donors.

    Per entry: the k nearest donors (masked Euclidean, donors observed at the
    position), combined by an inverse-distance-weighted mean.  Exact matches
    (distance zero) are averaged with equal weight.  Pass the same dataset as
    reference and target for in-sample imputation (self excluded).
    """
    out = target.copy()
    self_impute = reference is target
    for n, inst in enumerate(target.instances):
        miss = np.argwhere(np.isnan(inst.values))
        if miss.size == 0:
            continue
        cand = []
        for idx, donor in enumerate(reference.instances):
            if self_impute and idx == n:
                continue
            cand.append((idx, _masked_euclidean(inst.values, donor.values)))
        for j, t in miss:
            j, t = int(j), int(t)
            donors = [
                (dist, reference.instances[idx].values[j, t])
                for idx, dist in cand
                if reference.instances[idx].values.shape[1] > t
                and not np.isnan(reference.instances[idx].values[j, t])
                and np.isfinite(dist)
            ]
            donors.sort(key=lambda dv: dv[0])
            donors = donors[:k]
            if not donors:
                raise ValueError(f"no kNN donors for ({inst.uid!r}, {j}, {t})")
            zeros = [v for dist, v in donors if dist == 0.0]
            if zeros:
                out.instances[n].values[j, t] = float(np.mean(zeros))
            else:
                w = np.array([1.0 / dist for dist, _ in donors])
                v = np.array([v for _, v in donors])
                out.instances[n].values[j, t] = float(w @ v / w.sum())
    out.check_masks()
    return out


def accuracy(truth, preds):
    return float(np.mean([t == p for t, p in zip(truth, preds)]))


def r2_score(truth, preds):
    t = np.asarray(truth, dtype=float)
    p = np.asarray(preds, dtype=float)
    ss_tot = float(np.sum((t - t.mean()) ** 2))
    if ss_tot == 0.0:
        return float("nan")
    return 1.0 - float(np.sum((t - p) ** 2)) / ss_tot
