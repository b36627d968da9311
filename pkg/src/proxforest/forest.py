"""Proximity-tree ensembles with bootstrap resampling.

Classification trees split multi-way (one exemplar per class present at the
node); regression trees are strictly binary (two distinct exemplars drawn from
the node pool).  Every tree is grown on a bootstrap resample of size N, whose
multiplicity vector c_j(t) and out-of-bag set drive the GAP proximities.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace as _dc_replace

import numpy as np

from .data import CLASSIFICATION, GRAPH, REGRESSION, Dataset, Graph, Instance
from .distances import DistanceSpec, registry_resolve
from .meta import PredictionTable

log = logging.getLogger("proxforest.forest")

FORMAT_NAME = "proxforest-model"
FORMAT_VERSION = "1.0"

#: relative tolerance for vote ties; spacing of distinct rational vote masses
#: at desk scale is far above this, accumulated float noise far below
VOTE_TIE_TOL = 1e-11


class ModelFormatError(ValueError):
    """Model file is corrupt, truncated, or from an incompatible version."""


def argmax_tied_low(scores, tol=VOTE_TIE_TOL):
    """Index of the maximal score, breaking near-exact ties to the lowest index."""
    scores = np.asarray(scores, dtype=np.float64)
    best = float(scores.max())
    span = max(abs(best), 1.0)
    return int(np.flatnonzero(scores >= best - tol * span)[0])


@dataclass
class ForestConfig:
    n_trees: int = 11
    r: int = 5
    distances: list = field(default_factory=lambda: [DistanceSpec("euclidean")])
    distance_choice: str = "per-node"  # per-node | per-tree
    task: str = CLASSIFICATION
    purity: str = "gini"  # gini | variance | mad
    max_depth: int | None = None
    min_leaf: int = 1
    seed: int = 0
    n_threads: int = 1

    def validate(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if not self.distances:
            raise ValueError("at least one distance spec is required")
        if self.distance_choice not in ("per-node", "per-tree"):
            raise ValueError(f"bad distance_choice {self.distance_choice!r}")
        if self.task == CLASSIFICATION and self.purity != "gini":
            raise ValueError("classification requires gini purity")
        if self.task == REGRESSION and self.purity not in ("variance", "mad"):
            raise ValueError("regression requires variance or mad purity")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")

    def replace(self, **kw):
        return _dc_replace(self, **kw)


class Internal:
    __slots__ = ("spec_idx", "exemplars", "children")

    def __init__(self, spec_idx, exemplars, children):
        self.spec_idx = spec_idx
        self.exemplars = exemplars  # training indices, one per kept branch
        self.children = children


class Leaf:
    __slots__ = ("members", "donor_ids", "donor_mult", "size", "counts", "mean", "reason")

    def __init__(self, members, y_enc, n_classes, task, reason):
        self.members = np.asarray(members, dtype=np.intp)
        self.donor_ids, self.donor_mult = np.unique(self.members, return_counts=True)
        self.size = int(self.members.size)
        self.reason = reason
        if task == CLASSIFICATION:
            self.counts = np.bincount(y_enc[self.members], minlength=n_classes).astype(np.float64)
            self.mean = None
        else:
            self.counts = None
            self.mean = float(np.mean(y_enc[self.members]))

    def distribution(self):
        return self.counts / self.size


class Tree:
    __slots__ = ("root", "in_bag_counts", "oob_ids", "depth", "n_nodes", "leaves")

    def __init__(self, root, in_bag_counts, depth, n_nodes, leaves):
        self.root = root
        self.in_bag_counts = in_bag_counts  # c_j(t) over all N training points
        self.oob_ids = np.flatnonzero(in_bag_counts == 0)
        self.depth = depth
        self.n_nodes = n_nodes
        self.leaves = leaves


def _gini(counts):
    total = counts.sum()
    p = counts / total
    return 1.0 - float(p @ p)


def _variance(values):
    return float(np.mean((values - values.mean()) ** 2))


def _mad(values):
    return float(np.mean(np.abs(values - np.median(values))))


class _Grower:
    """Grows one tree; owns the tree's RNG substream and resolved measures."""

    def __init__(self, dataset, y_enc, cfg, measures, rng):
        self.d = dataset
        self.y = y_enc
        self.cfg = cfg
        self.measures = measures
        self.rng = rng
        self.n_classes = len(dataset.class_labels) if cfg.task == CLASSIFICATION else 0
        self.depth_seen = 0
        self.n_nodes = 0
        self.leaves = []
        if cfg.distance_choice == "per-tree":
            self.tree_spec = int(rng.integers(len(measures)))
        else:
            self.tree_spec = None

    def grow(self):
        n = self.d.n
        in_bag = np.sort(self.rng.integers(0, n, size=n))
        counts = np.bincount(in_bag, minlength=n)
        root = self._grow_node(in_bag, 0)
        return Tree(root, counts, self.depth_seen, self.n_nodes, self.leaves)

    def _impurity(self, members):
        if self.cfg.task == CLASSIFICATION:
            return _gini(np.bincount(self.y[members], minlength=self.n_classes).astype(float))
        vals = self.y[members]
        return _variance(vals) if self.cfg.purity == "variance" else _mad(vals)

    def _leaf(self, members, reason):
        leaf = Leaf(members, self.y, self.n_classes, self.cfg.task, reason)
        self.leaves.append(leaf)
        self.n_nodes += 1
        return leaf

    def _is_pure(self, members):
        vals = self.y[members]
        if self.cfg.task == CLASSIFICATION:
            return bool(np.all(vals == vals[0]))
        return bool(vals.max() == vals.min())

    def _candidate(self, members):
        cfg = self.cfg
        spec_idx = (
            self.tree_spec
            if self.tree_spec is not None
            else int(self.rng.integers(len(self.measures)))
        )
        measure = self.measures[spec_idx]
        if cfg.task == CLASSIFICATION:
            classes = np.unique(self.y[members])
            if classes.size < 2:
                return None
            exemplars = [
                int(self.rng.choice(members[self.y[members] == c])) for c in classes
            ]
        else:
            uniq = np.unique(members)
            if uniq.size < 2:
                return None
            exemplars = [int(e) for e in self.rng.choice(uniq, size=2, replace=False)]

        uniq = np.unique(members)
        insts = self.d.instances
        assign = {}
        for u in uniq:
            dists = [measure(insts[u], insts[e]) for e in exemplars]
            assign[int(u)] = int(np.argmin(dists))  # ties go to the lowest branch
        branch_members = [[] for _ in exemplars]
        for m in members:
            branch_members[assign[int(m)]].append(int(m))

        kept = [(e, np.array(bm, dtype=np.intp)) for e, bm in zip(exemplars, branch_members) if bm]
        if len(kept) < 2:
            return None
        total = members.size
        score = sum(bm.size / total * self._impurity(bm) for _, bm in kept)
        return spec_idx, kept, score

    def _grow_node(self, members, depth):
        cfg = self.cfg
        self.depth_seen = max(self.depth_seen, depth)
        if self._is_pure(members):
            return self._leaf(members, "pure")
        if members.size < cfg.min_leaf:
            return self._leaf(members, "min_leaf")
        if cfg.max_depth is not None and depth >= cfg.max_depth:
            return self._leaf(members, "max_depth")

        best = None
        for _ in range(cfg.r):
            cand = self._candidate(members)
            if cand is not None and (best is None or cand[2] < best[2]):
                best = cand
        if best is None:
            return self._leaf(members, "no_progress")
        if cfg.task == REGRESSION and best[2] >= self._impurity(members) - 1e-12:
            return self._leaf(members, "no_progress")

        spec_idx, kept, _ = best
        self.n_nodes += 1
        children = [self._grow_node(bm, depth + 1) for _, bm in kept]
        return Internal(spec_idx, [e for e, _ in kept], children)


class Forest:
    """A fitted ensemble over an immutable training dataset."""

    def __init__(self, cfg, dataset, y_enc, trees, measures):
        self.cfg = cfg
        self.train = dataset
        self.y_enc = y_enc
        self.trees = trees
        self.measures = measures
        self.n_classes = len(dataset.class_labels) if cfg.task == CLASSIFICATION else 0

    @property
    def n_train(self):
        return self.train.n

    def route(self, tree_index, inst, counter=None):
        """Descend one tree; returns the reached leaf."""
        node = self.trees[tree_index].root
        insts = self.train.instances
        while isinstance(node, Internal):
            measure = self.measures[node.spec_idx]
            try:
                dists = [measure(inst, insts[e]) for e in node.exemplars]
            except Exception as exc:
                raise RuntimeError(
                    f"distance evaluation failed routing {inst.uid!r} in tree {tree_index}: {exc}"
                ) from exc
            if counter is not None:
                counter.add(len(node.exemplars))
            node = node.children[int(np.argmin(dists))]
        return node

    def _scores_for(self, inst, tree_indices, counter=None):
        """Mean leaf class distribution (or mean of leaf means) over given trees."""
        if self.cfg.task == CLASSIFICATION:
            acc = np.zeros(self.n_classes)
            for t in tree_indices:
                acc += self.route(t, inst, counter).distribution()
            return acc / len(tree_indices)
        return float(
            np.mean([self.route(t, inst, counter).mean for t in tree_indices])
        )

    def predict(self, inst, counter=None):
        all_trees = range(len(self.trees))
        scores = self._scores_for(inst, all_trees, counter)
        if self.cfg.task == REGRESSION:
            return scores
        return self.train.class_labels[argmax_tied_low(scores)]

    def predict_many(self, instances, counter=None):
        return [self.predict(x, counter) for x in instances]

    def oob_tree_sets(self):
        """S_i: per training index, the list of trees where it is out-of-bag."""
        sets = [[] for _ in range(self.n_train)]
        for t, tree in enumerate(self.trees):
            for i in tree.oob_ids:
                sets[int(i)].append(t)
        return sets

    def predict_oob(self):
        """OOB predictions plus a coverage mask (False where S_i is empty)."""
        sets = self.oob_tree_sets()
        covered = np.array([len(s) > 0 for s in sets])
        preds = np.empty(self.n_train, dtype=object)
        for i, s in enumerate(sets):
            if not s:
                continue
            scores = self._scores_for(self.train.instances[i], s)
            if self.cfg.task == REGRESSION:
                preds[i] = scores
            else:
                preds[i] = self.train.class_labels[argmax_tied_low(scores)]
        if self.cfg.task == REGRESSION:
            out = np.array([preds[i] if covered[i] else np.nan for i in range(self.n_train)])
            return out, covered
        return preds, covered


def fit(dataset, cfg):
    """Grow a forest on bootstrap resamples; deterministic given cfg.seed."""
    cfg.validate()
    if cfg.task != dataset.task:
        raise ValueError(f"config task {cfg.task!r} != dataset task {dataset.task!r}")
    measures = [registry_resolve(spec) for spec in cfg.distances]
    for m in measures:
        if dataset.kind not in m.kinds:
            raise ValueError(
                f"distance {m.name!r} does not support {dataset.kind!r} payloads"
            )
    if cfg.task == CLASSIFICATION:
        y_enc = dataset.encoded_targets()
    else:
        y_enc = np.asarray(dataset.targets, dtype=np.float64)

    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees)

    def grow_one(t):
        t0 = time.perf_counter()
        tree = _Grower(dataset, y_enc, cfg, measures, np.random.default_rng(seeds[t])).grow()
        log.info(
            "tree %d: depth=%d nodes=%d time=%.3fs", t, tree.depth, tree.n_nodes,
            time.perf_counter() - t0,
        )
        return tree

    if cfg.n_threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_threads) as pool:
            trees = list(pool.map(grow_one, range(cfg.n_trees)))
    else:
        trees = [grow_one(t) for t in range(cfg.n_trees)]
    return Forest(cfg, dataset, y_enc, trees, measures)


class EvalCounter:
    """Counts distance evaluations during routing."""

    def __init__(self):
        self.count = 0

    def add(self, k):
        self.count += k

    def reset(self):
        self.count = 0


# ---------------------------------------------------------------------------
# serialization: versioned, self-describing JSON with a payload checksum
# ---------------------------------------------------------------------------

def _spec_to_json(spec, tables):
    params = {}
    for k, v in spec.params.items():
        if isinstance(v, PredictionTable):
            key = id(v)
            if key not in tables:
                tables[key] = (len(tables), v)
            params[k] = {"__table__": tables[key][0]}
        else:
            params[k] = v
    return {"name": spec.name, "params": params}


def _spec_from_json(obj, tables):
    params = {}
    for k, v in obj["params"].items():
        if isinstance(v, dict) and "__table__" in v:
            params[k] = tables[v["__table__"]]
        else:
            params[k] = v
    return DistanceSpec(obj["name"], params)


def _table_to_json(table):
    if table.form == "label":
        entries = [[u, v] for u, v in sorted(table._entries.items())]
    else:
        entries = [[u, list(map(float, v))] for u, v in sorted(table._entries.items())]
    return {"form": table.form, "entries": entries}


def _values_to_json(values):
    return [[None if np.isnan(v) else float(v) for v in row] for row in values]


def _node_to_json(node):
    if isinstance(node, Leaf):
        return {
            "leaf": True,
            "members": node.members.tolist(),
            "reason": node.reason,
        }
    return {
        "leaf": False,
        "spec_idx": node.spec_idx,
        "exemplars": node.exemplars,
        "children": [_node_to_json(c) for c in node.children],
    }


def _node_from_json(obj, y_enc, n_classes, task, leaves):
    if obj["leaf"]:
        leaf = Leaf(np.array(obj["members"], dtype=np.intp), y_enc, n_classes, task, obj["reason"])
        leaves.append(leaf)
        return leaf
    children = [_node_from_json(c, y_enc, n_classes, task, leaves) for c in obj["children"]]
    return Internal(obj["spec_idx"], list(obj["exemplars"]), children)


def serialize(forest, path):
    """Write the forest (with its training data and bootstrap records) to disk."""
    tables = {}
    cfg = forest.cfg
    d = forest.train
    payload = {
        "config": {
            "n_trees": cfg.n_trees,
            "r": cfg.r,
            "distances": [_spec_to_json(s, tables) for s in cfg.distances],
            "distance_choice": cfg.distance_choice,
            "task": cfg.task,
            "purity": cfg.purity,
            "max_depth": cfg.max_depth,
            "min_leaf": cfg.min_leaf,
            "seed": cfg.seed,
        },
        "dataset": {
            "kind": d.kind,
            "task": d.task,
            "feature_names": d.feature_names,
            "categorical": {str(k): v for k, v in d.categorical.items()},
            "class_labels": d.class_labels,
            "targets": [float(y) for y in d.targets] if d.task == REGRESSION else list(d.targets),
            "instances": [
                {
                    "uid": inst.uid,
                    "values": None if inst.values is None else _values_to_json(inst.values),
                    "graph": None
                    if inst.graph is None
                    else {"nodes": list(inst.graph.node_labels),
                          "edges": [list(e) for e in inst.graph.edges]},
                }
                for inst in d.instances
            ],
        },
        "trees": [
            {"in_bag": tree.in_bag_counts.tolist(), "root": _node_to_json(tree.root),
             "depth": tree.depth, "n_nodes": tree.n_nodes}
            for tree in forest.trees
        ],
    }
    payload["prediction_tables"] = [
        _table_to_json(t) for _, t in sorted(tables.values(), key=lambda it: it[0])
    ]
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "sha256": hashlib.sha256(blob.encode()).hexdigest(),
        "payload": payload,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def deserialize(path):
    """Load a forest written by serialize(); verifies version and checksum."""
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: not a valid model file ({exc})")
    if doc.get("format") != FORMAT_NAME:
        raise ModelFormatError(f"{path}: not a {FORMAT_NAME} file")
    major = str(doc.get("version", "")).split(".")[0]
    if major != FORMAT_VERSION.split(".")[0]:
        raise ModelFormatError(
            f"{path}: incompatible model version {doc.get('version')} (need {FORMAT_VERSION.split('.')[0]}.x)"
        )
    payload = doc["payload"]
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    if hashlib.sha256(blob.encode()).hexdigest() != doc.get("sha256"):
        raise ModelFormatError(f"{path}: checksum mismatch (file corrupt or truncated)")

    tables = [
        PredictionTable([(u, v if isinstance(v, str) else np.array(v)) for u, v in t["entries"]], t["form"])
        for t in payload["prediction_tables"]
    ]

    ds = payload["dataset"]
    instances = []
    for rec in ds["instances"]:
        if rec["values"] is not None:
            vals = np.array(
                [[np.nan if v is None else v for v in row] for row in rec["values"]],
                dtype=np.float64,
            )
            instances.append(Instance(rec["uid"], vals))
        else:
            g = rec["graph"]
            instances.append(
                Instance(rec["uid"], graph=Graph(tuple(g["nodes"]), tuple(tuple(e) for e in g["edges"])))
            )
    if ds["task"] == REGRESSION:
        targets = np.array(ds["targets"], dtype=np.float64)
    else:
        targets = np.array(ds["targets"], dtype=object)
    dataset = Dataset(
        kind=ds["kind"],
        task=ds["task"],
        instances=instances,
        targets=targets,
        feature_names=ds["feature_names"],
        categorical={int(k): v for k, v in ds["categorical"].items()},
        class_labels=ds["class_labels"],
    )

    c = payload["config"]
    cfg = ForestConfig(
        n_trees=c["n_trees"],
        r=c["r"],
        distances=[_spec_from_json(s, tables) for s in c["distances"]],
        distance_choice=c["distance_choice"],
        task=c["task"],
        purity=c["purity"],
        max_depth=c["max_depth"],
        min_leaf=c["min_leaf"],
        seed=c["seed"],
    )
    measures = [registry_resolve(spec) for spec in cfg.distances]
    if cfg.task == CLASSIFICATION:
        y_enc = dataset.encoded_targets()
        n_classes = len(dataset.class_labels)
    else:
        y_enc = np.asarray(dataset.targets, dtype=np.float64)
        n_classes = 0

    trees = []
    for trec in payload["trees"]:
        leaves = []
        root = _node_from_json(trec["root"], y_enc, n_classes, cfg.task, leaves)
        trees.append(
            Tree(root, np.array(trec["in_bag"], dtype=np.intp), trec["depth"], trec["n_nodes"], leaves)
        )
    return Forest(cfg, dataset, y_enc, trees, measures)
