"""Thin scripting bindings over the proxforest library.

Plain arrays and lists in, library results out.  Nothing here reimplements
ensemble, distance, or imputation logic: every call round-trips through
proxforest's public API, so results are identical to the CLI given identical
seeds (asserted bit-for-bit in the parity tests).

A fitted forest is held behind a :class:`BoundForestHandle`; every operation
on a closed handle fails loudly.  Handles are not shareable across concurrent
callers: use one handle per thread.
"""

from __future__ import annotations

import numpy as np

import proxforest as pf

#: kept in lockstep with the proxforest core
__version__ = "0.1.0"

VALID_CONFIG_KEYS = frozenset(
    {
        "kind",
        "task",
        "n_trees",
        "r",
        "distances",
        "distance_choice",
        "purity",
        "max_depth",
        "min_leaf",
        "seed",
        "n_threads",
        "ids",
        "feature_names",
        "categorical",
    }
)

VALID_IMPUTE_KEYS = frozenset({"init", "iterations", "metric", "knn_k", "condition_on_label"})

__all__ = [
    "BindingError",
    "BoundForestHandle",
    "ClosedHandleError",
    "VALID_CONFIG_KEYS",
    "VALID_IMPUTE_KEYS",
    "fit",
    "impute",
    "outliers",
    "predict",
    "predictions_from_callable",
    "proximities",
]


class BindingError(ValueError):
    """Bad arguments at the binding boundary (shape, kind, or config errors)."""


class ClosedHandleError(RuntimeError):
    """Operation attempted on a handle after close()."""


def _check_keys(mapping, valid, what):
    unknown = sorted(set(mapping) - valid)
    if unknown:
        raise BindingError(
            f"unknown {what} key(s) {unknown}; valid keys: {sorted(valid)}"
        )


def _coerce_distance(item):
    if isinstance(item, pf.DistanceSpec):
        return item
    if isinstance(item, str):
        return pf.DistanceSpec(item)
    if isinstance(item, dict):
        return pf.DistanceSpec(item["name"], dict(item.get("params", {})))
    if isinstance(item, (tuple, list)) and len(item) == 2:
        return pf.DistanceSpec(item[0], dict(item[1]))
    raise BindingError(
        f"cannot interpret distance {item!r}; pass a name, a (name, params) pair, "
        "or a {'name': ..., 'params': ...} mapping"
    )


def _vector_instances(data, ids):
    rows = [np.asarray(row, dtype=np.float64) for row in data]
    p = rows[0].shape[0] if rows[0].ndim == 1 else None
    instances = []
    for i, row in enumerate(rows):
        if row.ndim != 1:
            raise BindingError(f"instance {i}: expected a 1-D feature row, got shape {row.shape}")
        if row.shape[0] != p:
            raise BindingError(f"instance {i}: expected {p} features, got {row.shape[0]}")
        instances.append(pf.Instance(ids[i], row.reshape(p, 1)))
    return instances


def _series_instances(data, ids):
    grids = []
    for i, item in enumerate(data):
        try:
            grid = np.asarray(item, dtype=np.float64)
        except ValueError as exc:
            raise BindingError(f"instance {i}: ragged channels ({exc})")
        if grid.ndim == 1:
            grid = grid.reshape(1, -1)
        if grid.ndim != 2:
            raise BindingError(f"instance {i}: expected (channels, length), got shape {grid.shape}")
        grids.append(grid)
    n_channels = grids[0].shape[0]
    for i, grid in enumerate(grids):
        if grid.shape[0] != n_channels:
            raise BindingError(f"instance {i}: expected {n_channels} channels, got {grid.shape[0]}")
    return [pf.Instance(ids[i], grid) for i, grid in enumerate(grids)]


def _graph_instances(data, ids):
    instances = []
    for i, item in enumerate(data):
        if isinstance(item, dict):
            nodes, edges = item["nodes"], item["edges"]
        elif isinstance(item, (tuple, list)) and len(item) == 2:
            nodes, edges = item
        else:
            raise BindingError(
                f"instance {i}: expected (nodes, edges) or a {{'nodes', 'edges'}} mapping"
            )
        nodes = tuple(nodes)
        clean = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if not (0 <= u < len(nodes) and 0 <= v < len(nodes)):
                raise BindingError(f"instance {i}: edge ({u}, {v}) indexes outside {len(nodes)} nodes")
            if u == v:
                continue
            clean.add((min(u, v), max(u, v)))
        instances.append(pf.Instance(ids[i], graph=pf.Graph(nodes, tuple(sorted(clean)))))
    return instances


def _make_ids(ids, n, prefix):
    if ids is None:
        return [f"{prefix}{i}" for i in range(n)]
    ids = [str(u) for u in ids]
    if len(ids) != n:
        raise BindingError(f"{len(ids)} ids for {n} instances")
    return ids


def _instances_from(data, kind, ids, prefix="r"):
    data = list(data)
    if not data:
        raise BindingError("no instances supplied")
    ids = _make_ids(ids, len(data), prefix)
    if kind == pf.VECTOR:
        return _vector_instances(data, ids)
    if kind == pf.SERIES:
        return _series_instances(data, ids)
    if kind == pf.GRAPH:
        return _graph_instances(data, ids)
    raise BindingError(f"unknown payload kind {kind!r}")


def _dataset_from(data, labels, kind, task, ids=None, feature_names=None, categorical=None):
    instances = _instances_from(data, kind, ids)
    labels = list(labels)
    if len(labels) != len(instances):
        raise BindingError(f"{len(instances)} instances but {len(labels)} labels")
    if task == pf.REGRESSION:
        targets = np.asarray(labels, dtype=np.float64)
    else:
        targets = np.array([str(y) for y in labels], dtype=object)
    return pf.Dataset(
        kind=kind,
        task=task,
        instances=instances,
        targets=targets,
        feature_names=list(feature_names) if feature_names is not None else None,
        categorical={int(k): list(v) for k, v in (categorical or {}).items()},
    )


def _split_config(config):
    config = dict(config or {})
    _check_keys(config, VALID_CONFIG_KEYS, "config")
    kind = config.pop("kind", pf.VECTOR)
    task = config.pop("task", pf.CLASSIFICATION)
    data_kw = {
        "ids": config.pop("ids", None),
        "feature_names": config.pop("feature_names", None),
        "categorical": config.pop("categorical", None),
    }
    if "distances" in config:
        config["distances"] = [_coerce_distance(s) for s in config["distances"]]
    if "purity" not in config and task == pf.REGRESSION:
        config["purity"] = "variance"
    cfg = pf.ForestConfig(task=task, **config)
    cfg.validate()
    return kind, task, cfg, data_kw


class BoundForestHandle:
    """A fitted forest plus the config that produced it.

    Valid until :meth:`close`; afterwards every operation raises
    :class:`ClosedHandleError`.  Usable as a context manager.
    """

    def __init__(self, forest, config):
        self._forest_obj = forest
        self.config = dict(config)
        self.closed = False

    def _forest(self):
        if self.closed:
            raise ClosedHandleError("operation on a closed forest handle")
        return self._forest_obj

    def close(self):
        self._forest_obj = None
        self.closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False

    @property
    def kind(self):
        return self._forest().train.kind

    @property
    def task(self):
        return self._forest().train.task

    def save(self, path):
        """Write the forest as a model file the CLI can load (and vice versa)."""
        pf.serialize(self._forest(), path)
        return path


def fit(data, labels, config=None):
    """Fit a forest on plain arrays/lists and return a BoundForestHandle.

    ``config`` maps ForestConfig fields plus ``kind`` (vector|series|graph),
    ``task``, ``ids``, ``feature_names``, and ``categorical``.  Unknown keys
    are rejected with the list of valid ones.
    """
    kind, task, cfg, data_kw = _split_config(config)
    dataset = _dataset_from(data, labels, kind, task, **data_kw)
    return BoundForestHandle(pf.fit(dataset, cfg), config or {})


def predict(handle, data, ids=None):
    """Predict labels (or regression values) for new instances."""
    forest = handle._forest()
    instances = _instances_from(data, forest.train.kind, ids, prefix="q")
    return forest.predict_many(instances)


def proximities(handle, data=None, ids=None, labels=None):
    """GAP proximity rows keyed by instance id.

    Without ``data``: OOB rows over the training set (ids of instances with no
    OOB tree are listed under ``"uncovered"``).  With ``data``: test-to-train
    rows for the supplied instances.
    """
    forest = handle._forest()
    if data is None:
        matrix = pf.compute_oob_proximities(forest)
        row_uid = lambda i: forest.train.instances[i].uid  # noqa: E731
        uncovered = [forest.train.instances[i].uid for i in matrix.uncovered]
    else:
        instances = _instances_from(data, forest.train.kind, ids, prefix="q")
        if labels is None:
            labels = [forest.train.targets[0]] * len(instances)
        test = _dataset_from(
            data, labels, forest.train.kind, forest.train.task,
            ids=[inst.uid for inst in instances],
        )
        matrix = pf.compute_test_proximities(forest, test)
        row_uid = lambda i: test.instances[i].uid  # noqa: E731
        uncovered = []
    col_uid = lambda j: forest.train.instances[j].uid  # noqa: E731
    rows = {
        row_uid(i): {col_uid(j): float(v) for j, v in sorted(row.items())}
        for i, row in matrix.rows.items()
    }
    return {"rows": rows, "uncovered": uncovered}


def _impute_config(impute_config):
    impute_config = dict(impute_config or {})
    _check_keys(impute_config, VALID_IMPUTE_KEYS, "impute config")
    return pf.ImputeConfig(**impute_config)


def impute(data, labels, config=None, impute_config=None, handle=None,
           donors=None, donor_labels=None, donor_ids=None, ids=None):
    """Iterative GAP imputation; returns the library's ImputationReport.

    Train mode (default): grow per-iteration forests on ``data`` under
    ``config`` and impute its missing entries (``config`` may carry ``ids``).
    Test mode (``handle`` given): impute ``data`` (named by ``ids``) from the
    fitted forest's proximities, with ``donors`` / ``donor_labels`` /
    ``donor_ids`` supplying the original training data.
    """
    icfg = _impute_config(impute_config)
    if handle is not None:
        if donors is None or donor_labels is None:
            raise BindingError("test-mode imputation requires donors and donor_labels")
        forest = handle._forest()
        cfg_map = dict(config or {})
        _check_keys(cfg_map, VALID_CONFIG_KEYS, "config")
        common = {
            "feature_names": cfg_map.get("feature_names"),
            "categorical": cfg_map.get("categorical"),
        }
        donor_ds = _dataset_from(
            donors, donor_labels, forest.train.kind, forest.train.task,
            ids=donor_ids, **common,
        )
        test_ds = _dataset_from(
            data, labels, forest.train.kind, forest.train.task,
            ids=ids, **common,
        )
        return pf.gap_impute_test(donor_ds, test_ds, forest, icfg)
    kind, task, cfg, data_kw = _split_config(config)
    dataset = _dataset_from(data, labels, kind, task, **data_kw)
    return pf.gap_impute_train(dataset, cfg, icfg)


def outliers(handle, top_q=3):
    """Within-class GAP outlier scores as a list of per-instance mappings."""
    forest = handle._forest()
    matrix = pf.compute_oob_proximities(forest)
    report = pf.outlier_scores(matrix, forest.train.targets, top_q=top_q)
    flagged = set(report.flagged)
    return [
        {
            "id": forest.train.instances[i].uid,
            "class": report.labels[k],
            "raw": float(report.raw[k]),
            "normalized": None if np.isnan(report.normalized[k]) else float(report.normalized[k]),
            "flag": i in flagged,
        }
        for k, i in enumerate(report.indices)
    ]


def predictions_from_callable(model, data, ids=None, kind=pf.VECTOR, form="label", path=None):
    """Materialize a PredictionTable by calling ``model`` on each instance.

    ``model`` receives one Instance at a time and returns a label (label form)
    or a probability row (probability form).  When ``path`` is given the table
    is also written as the predictions CSV consumed by the meta distances.
    """
    instances = _instances_from(data, kind, ids, prefix="q")
    table = pf.predictions_from_callable(model, instances, form=form)
    if path is not None:
        pf.save_predictions(table, path)
    return table
