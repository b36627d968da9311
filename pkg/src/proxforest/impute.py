"""Iterative GAP-based missing-value imputation.

The loop: initialize missing entries with a basic strategy, fit a forest on
the filled data, compute OOB proximities, replace each missing entry by the
proximity-weighted average (or majority vote) of donors observed at that
position, and repeat.  Observed entries are re-imputed as pseudo-missing each
iteration to score the pass internally; the best-scoring iteration wins.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import forest as forest_mod
from .data import CLASSIFICATION, GRAPH, SERIES, VECTOR
from .gap import compute_oob_proximities, compute_test_proximities

log = logging.getLogger("proxforest.impute")

_MAXIMIZE = {"r2", "f1", "accuracy"}
_MINIMIZE = {"rmse", "mae"}


@dataclass
class ImputeConfig:
    init: str = "mean"  # mean | median | knn | linear
    iterations: int = 5
    metric: str = "r2"  # r2 | rmse | mae | f1 | accuracy
    knn_k: int = 5
    condition_on_label: bool = False

    def validate(self, kind):
        if self.init not in ("mean", "median", "knn", "linear"):
            raise ValueError(f"unknown init strategy {self.init!r}")
        if self.init == "linear" and kind == VECTOR:
            raise ValueError("linear init interpolates along time; series only")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.metric not in _MAXIMIZE | _MINIMIZE:
            raise ValueError(f"unknown metric {self.metric!r}")


@dataclass
class ImputationReport:
    iteration_scores: list
    per_feature_scores: list
    selected_iteration: int
    dataset: object
    fallback_counts: list = field(default_factory=list)
    convex_hull_ok: bool = True


def _column_values(d, j, t, group=None):
    vals = []
    for i, inst in enumerate(d.instances):
        if group is not None and i not in group:
            continue
        if inst.values.shape[1] > t and not np.isnan(inst.values[j, t]):
            vals.append(inst.values[j, t])
    return np.array(vals)


def _column_fill(vals, how, categorical):
    if categorical:
        codes, counts = np.unique(vals, return_counts=True)
        return float(codes[np.argmax(counts)])  # mode; ties to the lowest code
    return float(np.mean(vals)) if how == "mean" else float(np.median(vals))


def _masked_euclidean(a, b):
    x, y = a.ravel(), b.ravel()
    ok = ~(np.isnan(x) | np.isnan(y))
    if not ok.any():
        return np.inf
    diff = x[ok] - y[ok]
    return float(np.sqrt(diff @ diff))


def initialize(d, cfg, use_labels=True):
    """Fill every missing entry with the configured basic strategy."""
    if d.kind == GRAPH:
        raise ValueError("graph datasets cannot be imputed")
    cfg.validate(d.kind)
    out = d.copy()
    cond = cfg.condition_on_label and use_labels

    if cfg.init in ("mean", "median"):
        groups = None
        if cond:
            groups = {}
            for i, y in enumerate(d.targets):
                groups.setdefault(y, set()).add(i)
        empty = []
        for i, inst in enumerate(out.instances):
            miss = np.argwhere(np.isnan(inst.values))
            for j, t in miss:
                vals = np.array([])
                if cond:
                    vals = _column_values(d, j, t, groups[d.targets[i]])
                if vals.size == 0:
                    vals = _column_values(d, j, t)
                if vals.size == 0:
                    empty.append((int(j), int(t)))
                    continue
                inst.values[j, t] = _column_fill(vals, cfg.init, int(j) in d.categorical)
        if empty:
            raise ValueError(
                f"no observed values to initialize columns {sorted(set(empty))}"
            )
    elif cfg.init == "linear":
        for inst in out.instances:
            for j in range(inst.values.shape[0]):
                row = inst.values[j]
                obs = np.flatnonzero(~np.isnan(row))
                if obs.size == 0:
                    raise ValueError(
                        f"instance {inst.uid!r} channel {j} has no observed values"
                    )
                gaps = np.flatnonzero(np.isnan(row))
                # np.interp holds the edge values flat outside the observed range
                row[gaps] = np.interp(gaps, obs, row[obs])
    else:  # knn
        for i, inst in enumerate(out.instances):
            miss = np.argwhere(np.isnan(d.instances[i].values))
            if miss.size == 0:
                continue
            dists = [
                (_masked_euclidean(d.instances[i].values, other.values), k)
                for k, other in enumerate(d.instances)
                if k != i and other.values.shape == d.instances[i].values.shape
            ]
            dists.sort()
            for j, t in miss:
                donors = [
                    d.instances[k].values[j, t]
                    for _, k in dists
                    if d.instances[k].values.shape[1] > t
                    and not np.isnan(d.instances[k].values[j, t])
                ][: cfg.knn_k]
                if not donors:
                    raise ValueError(f"no kNN donors for ({inst.uid!r}, {j}, {t})")
                if int(j) in d.categorical:
                    codes, counts = np.unique(donors, return_counts=True)
                    inst.values[j, t] = float(codes[np.argmax(counts)])
                else:
                    inst.values[j, t] = float(np.mean(donors))
    out.check_masks()
    return out


def _impute_entry(row_weights, donors, categorical, hull=None):
    """Renormalized proximity-weighted average / vote over observed donors.

    ``donors`` is a list of (train index, value).  Returns None when no donor
    carries weight (caller falls back to the initialization value).
    """
    pairs = [(row_weights.get(k, 0.0), v) for k, v in donors]
    total = sum(w for w, _ in pairs)
    if total <= 0.0:
        return None
    if categorical:
        votes = {}
        for w, v in pairs:
            if w > 0.0:
                votes[v] = votes.get(v, 0.0) + w
        best = max(votes.values())
        return min(v for v, s in votes.items() if s >= best - 1e-12 * max(best, 1.0))
    value = sum(w * v for w, v in pairs) / total
    if hull is not None:
        used = [v for w, v in pairs if w > 0.0]
        hull.append((min(used), max(used), value))
    return value


def _score(true_cont, pred_cont, true_cat, pred_cat, metric):
    if metric in ("r2", "rmse", "mae"):
        t = np.asarray(true_cont, dtype=float)
        p = np.asarray(pred_cont, dtype=float)
        if t.size == 0:
            return float("nan")
        if metric == "rmse":
            return float(np.sqrt(np.mean((t - p) ** 2)))
        if metric == "mae":
            return float(np.mean(np.abs(t - p)))
        ss_tot = float(np.sum((t - t.mean()) ** 2))
        if ss_tot == 0.0:
            return float("nan")
        return 1.0 - float(np.sum((t - p) ** 2)) / ss_tot
    t = list(true_cat)
    p = list(pred_cat)
    if not t:
        return float("nan")
    if metric == "accuracy":
        return sum(a == b for a, b in zip(t, p)) / len(t)
    # macro F1 over the categories present in the truth
    f1s = []
    for c in sorted(set(t)):
        tp = sum(1 for a, b in zip(t, p) if a == c and b == c)
        fp = sum(1 for a, b in zip(t, p) if a != c and b == c)
        fn = sum(1 for a, b in zip(t, p) if a == c and b != c)
        denom = 2 * tp + fp + fn
        f1s.append(0.0 if denom == 0 else 2 * tp / denom)
    return float(np.mean(f1s))


def internal_score(pseudo_true, pseudo_imputed, metric, categorical=False):
    """Score a pseudo-missing reconstruction with the configured metric."""
    if len(pseudo_true) != len(pseudo_imputed):
        raise ValueError("pseudo-missing truth/imputation length mismatch")
    if categorical:
        return _score([], [], pseudo_true, pseudo_imputed, metric)
    return _score(pseudo_true, pseudo_imputed, [], [], metric)


def _donors_at(d, j, t, skip=None):
    out = []
    for k, inst in enumerate(d.instances):
        if k == skip:
            continue
        if inst.values.shape[1] > t and not np.isnan(inst.values[j, t]):
            out.append((k, float(inst.values[j, t])))
    return out


def _select_iteration(scores, metric):
    valid = [(s, it) for it, s in enumerate(scores) if not np.isnan(s)]
    if not valid:
        warnings.warn("internal metric undefined in every iteration; keeping the first")
        return 0
    if metric in _MAXIMIZE:
        best = max(s for s, _ in valid)
    else:
        best = min(s for s, _ in valid)
    return min(it for s, it in valid if s == best)


def gap_impute_train(d, forest_cfg, impute_cfg):
    """Iterative GAP imputation of a training dataset; see module docstring."""
    if d.kind == GRAPH:
        raise ValueError("graph datasets cannot be imputed")
    impute_cfg.validate(d.kind)
    init = initialize(d, impute_cfg, use_labels=True)
    current = init.copy()
    missing = [np.argwhere(np.isnan(inst.values)) for inst in d.instances]

    iteration_scores = []
    per_feature = []
    fallbacks = []
    snapshots = []
    hull = []

    for it in range(impute_cfg.iterations):
        cfg = forest_cfg.replace(seed=int(np.random.SeedSequence([forest_cfg.seed, it]).generate_state(1)[0]))
        fitted = forest_mod.fit(current, cfg)
        gapm = compute_oob_proximities(fitted)

        n_fallback = 0
        new_vals = {}
        for n, miss in enumerate(missing):
            row = gapm.rows.get(n)
            for j, t in miss:
                j, t = int(j), int(t)
                value = None
                if row is not None:
                    value = _impute_entry(
                        row, _donors_at(d, j, t, skip=n), j in d.categorical, hull
                    )
                if value is None:
                    n_fallback += 1
                    value = float(init.instances[n].values[j, t])
                new_vals[(n, j, t)] = value

        # pseudo-missing pass: re-impute every observed entry for scoring
        tc, pc = [], []
        tcat, pcat = [], []
        per_feat = {}
        for n, inst in enumerate(d.instances):
            row = gapm.rows.get(n)
            if row is None:
                continue
            obs = np.argwhere(~np.isnan(inst.values))
            for j, t in obs:
                j, t = int(j), int(t)
                value = _impute_entry(row, _donors_at(d, j, t, skip=n), j in d.categorical)
                if value is None:
                    continue
                truth = float(inst.values[j, t])
                if j in d.categorical:
                    tcat.append(truth)
                    pcat.append(value)
                else:
                    tc.append(truth)
                    pc.append(value)
                per_feat.setdefault(j, ([], []))[0].append(truth)
                per_feat[j][1].append(value)

        score = _score(tc, pc, tcat, pcat, impute_cfg.metric)
        iteration_scores.append(score)
        per_feature.append(
            {
                j: internal_score(tv, pv, impute_cfg.metric, j in d.categorical)
                for j, (tv, pv) in sorted(per_feat.items())
            }
        )
        fallbacks.append(n_fallback)
        snapshots.append(new_vals)
        log.info("imputation iteration %d: %s=%.6g fallbacks=%d", it, impute_cfg.metric,
                 score, n_fallback)

        for (n, j, t), v in new_vals.items():
            current.instances[n].values[j, t] = v

    selected = _select_iteration(iteration_scores, impute_cfg.metric)
    final = init.copy()
    for (n, j, t), v in snapshots[selected].items():
        final.instances[n].values[j, t] = v

    hull_ok = all(lo - 1e-9 <= v <= hi + 1e-9 for lo, hi, v in hull)
    return ImputationReport(
        iteration_scores, per_feature, selected, final, fallbacks, hull_ok
    )


def gap_impute_test(train, test, fitted, impute_cfg):
    """Impute a test dataset from observed training data via test-to-train GAP rows.

    ``train`` must be the original training dataset (its NaN pattern defines
    which training entries may donate); ``fitted`` is the forest trained on
    the (imputed) training data.
    """
    impute_cfg.validate(test.kind)
    init = initialize(test, impute_cfg, use_labels=False)
    max_train_len = max(inst.values.shape[1] for inst in train.instances)
    for inst in test.instances:
        if inst.values.shape[1] > max_train_len:
            raise ValueError(
                f"test instance {inst.uid!r} has {inst.values.shape[1]} time points; "
                f"training grid only covers {max_train_len}"
            )

    gapm = compute_test_proximities(fitted, init)
    out = init.copy()
    n_fallback = 0
    hull = []
    for n, inst in enumerate(test.instances):
        row = gapm.rows.get(n)
        miss = np.argwhere(np.isnan(inst.values))
        for j, t in miss:
            j, t = int(j), int(t)
            value = None
            if row is not None:
                value = _impute_entry(row, _donors_at(train, j, t), j in train.categorical, hull)
            if value is None:
                n_fallback += 1
                value = float(init.instances[n].values[j, t])
            out.instances[n].values[j, t] = value
    if n_fallback:
        log.info("test imputation fallbacks: %d", n_fallback)
    hull_ok = all(lo - 1e-9 <= v <= hi + 1e-9 for lo, hi, v in hull)
    return ImputationReport([], [], 0, out, [n_fallback], hull_ok)
