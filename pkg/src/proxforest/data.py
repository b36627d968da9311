"""Dataset ingestion, representation, splitting, and MCAR corruption.

Instances carry one of three payload kinds:

* ``vector``  -- a fixed-length real vector, stored as a ``(p, 1)`` array
* ``series``  -- a multichannel series, stored as a ``(p, T_n)`` array where
  ``T_n`` may differ across instances (but not across channels of one
  instance)
* ``graph``   -- an undirected graph with discrete node labels

Missing values are encoded as NaN inside the value array, so the observed /
missing index sets always partition the grid by construction.  Graphs never
carry missing values.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

VECTOR = "vector"
SERIES = "series"
GRAPH = "graph"

CLASSIFICATION = "classification"
REGRESSION = "regression"


class DataFormatError(ValueError):
    """Raised when an input file violates its documented format."""


@dataclass(frozen=True)
class Graph:
    """Undirected graph payload: discrete node labels plus a dedup'd edge set."""

    node_labels: tuple
    edges: tuple  # tuple of (u, v) with u < v, no duplicates, no self-loops

    @property
    def n_nodes(self):
        return len(self.node_labels)


@dataclass
class Instance:
    """One data point: a unique id plus either a value grid or a graph."""

    uid: str
    values: np.ndarray | None = None  # (p, T) float64, NaN = missing
    graph: Graph | None = None

    @property
    def p(self):
        return None if self.values is None else self.values.shape[0]

    @property
    def length(self):
        return None if self.values is None else self.values.shape[1]

    def missing_sets(self):
        """Per-feature sets of missing positions M_nj (empty for graphs)."""
        if self.values is None:
            return {}
        miss = np.isnan(self.values)
        return {j: set(np.flatnonzero(miss[j]).tolist()) for j in range(self.values.shape[0])}

    def observed_count(self):
        return 0 if self.values is None else int(np.sum(~np.isnan(self.values)))

    def copy(self):
        vals = None if self.values is None else self.values.copy()
        return Instance(self.uid, vals, self.graph)


@dataclass
class Dataset:
    """A homogeneous collection of instances with aligned targets."""

    kind: str  # vector | series | graph
    task: str  # classification | regression
    instances: list
    targets: np.ndarray  # object array (classification) or float array (regression)
    feature_names: list | None = None
    categorical: dict = field(default_factory=dict)  # feature index -> category names
    class_labels: list | None = None  # sorted label alphabet (classification)

    def __post_init__(self):
        if len(self.instances) != len(self.targets):
            raise DataFormatError(
                f"{len(self.instances)} instances but {len(self.targets)} targets"
            )
        if len(self.instances) == 0:
            raise DataFormatError("dataset must contain at least one instance")
        if self.task == CLASSIFICATION and self.class_labels is None:
            self.class_labels = sorted(set(self.targets.tolist()))

    @property
    def n(self):
        return len(self.instances)

    @property
    def p(self):
        if self.kind == GRAPH:
            return None
        return self.instances[0].p

    def target_index(self, label):
        return self.class_labels.index(label)

    def encoded_targets(self):
        """Targets as integer indices into the sorted label alphabet."""
        if self.task == REGRESSION:
            raise ValueError("encoded_targets is only defined for classification")
        lut = {c: i for i, c in enumerate(self.class_labels)}
        return np.array([lut[y] for y in self.targets], dtype=np.intp)

    def subset(self, indices):
        tgt = self.targets[np.asarray(indices)]
        return Dataset(
            kind=self.kind,
            task=self.task,
            instances=[self.instances[i] for i in indices],
            targets=tgt,
            feature_names=self.feature_names,
            categorical=dict(self.categorical),
            class_labels=self.class_labels,
        )

    def copy(self):
        return Dataset(
            kind=self.kind,
            task=self.task,
            instances=[inst.copy() for inst in self.instances],
            targets=self.targets.copy(),
            feature_names=self.feature_names,
            categorical=dict(self.categorical),
            class_labels=self.class_labels,
        )

    def check_masks(self):
        """Assert the missing/observed partition invariant on every instance."""
        for inst in self.instances:
            if self.kind == GRAPH:
                if inst.values is not None:
                    raise AssertionError(f"graph instance {inst.uid} carries values")
                continue
            sets = inst.missing_sets()
            for j, mset in sets.items():
                t = inst.values.shape[1]
                oset = set(range(t)) - mset
                if mset | oset != set(range(t)) or mset & oset:
                    raise AssertionError(f"mask partition broken on {inst.uid}")


def _parse_cell(text):
    text = text.strip()
    if text == "":
        return np.nan
    return float(text)


def load_csv(path, label_column, task=CLASSIFICATION, id_column=None):
    """Load a vector dataset from a headered CSV file.

    Empty cells denote missing values.  Non-numeric feature columns are
    label-encoded (sorted category order) and flagged as categorical.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file, header row required")
        rows = list(reader)
    if label_column not in header:
        raise DataFormatError(f"{path}: label column {label_column!r} not in header {header}")
    label_idx = header.index(label_column)
    id_idx = header.index(id_column) if id_column is not None else None
    feat_idx = [i for i in range(len(header)) if i not in (label_idx, id_idx)]
    feature_names = [header[i] for i in feat_idx]

    width = len(header)
    for r, row in enumerate(rows):
        if len(row) != width:
            raise DataFormatError(f"{path}: row {r + 2} has {len(row)} cells, expected {width}")
    if not rows:
        raise DataFormatError(f"{path}: no data rows")

    # detect categorical feature columns: any non-empty cell that does not parse
    columns = [[row[i] for row in rows] for i in feat_idx]
    categorical = {}
    for j, col in enumerate(columns):
        is_cat = False
        for cell in col:
            if cell.strip() == "":
                continue
            try:
                float(cell)
            except ValueError:
                is_cat = True
                break
        if is_cat:
            categorical[j] = sorted({c.strip() for c in col if c.strip() != ""})

    instances = []
    labels = []
    for r, row in enumerate(rows):
        uid = row[id_idx].strip() if id_idx is not None else f"r{r}"
        vals = np.empty((len(feat_idx), 1), dtype=np.float64)
        for j, i in enumerate(feat_idx):
            cell = row[i].strip()
            if cell == "":
                vals[j, 0] = np.nan
            elif j in categorical:
                vals[j, 0] = float(categorical[j].index(cell))
            else:
                vals[j, 0] = _parse_cell(cell)
        if np.all(np.isnan(vals)):
            raise DataFormatError(f"{path}: instance {uid} (row {r + 2}) has no observed values")
        instances.append(Instance(uid, vals))
        labels.append(row[label_idx].strip())

    if task == REGRESSION:
        targets = np.array([float(v) for v in labels], dtype=np.float64)
        if not np.all(np.isfinite(targets)):
            raise DataFormatError(f"{path}: non-finite regression target")
    else:
        targets = np.array(labels, dtype=object)
    return Dataset(VECTOR, task, instances, targets, feature_names, categorical)


def save_csv(d, path):
    """Write a vector dataset back to CSV (inverse of load_csv, label last)."""
    if d.kind != VECTOR:
        raise ValueError("save_csv only handles vector datasets")
    names = d.feature_names or [f"f{j}" for j in range(d.p)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + names + ["label"])
        for inst, y in zip(d.instances, d.targets):
            cells = []
            for j in range(d.p):
                v = inst.values[j, 0]
                if np.isnan(v):
                    cells.append("")
                elif j in d.categorical:
                    cells.append(d.categorical[j][int(round(v))])
                else:
                    cells.append(repr(float(v)))
            writer.writerow([inst.uid] + cells + [y])


def load_series_jsonl(path, task=CLASSIFICATION):
    """Load a series dataset from line-delimited JSON records.

    Each record: ``{"id": ..., "label": ..., "channels": [[...], ...]}`` with
    ``null`` entries denoting missing values.  Channel lengths must agree
    within an instance; they may differ across instances.
    """
    instances = []
    labels = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: invalid JSON ({exc})")
            channels = rec.get("channels")
            if not channels:
                raise DataFormatError(f"{path}:{lineno}: record has no channels")
            lengths = {len(ch) for ch in channels}
            if len(lengths) != 1:
                raise DataFormatError(
                    f"{path}:{lineno}: unequal channel lengths {sorted(lengths)} within one instance"
                )
            vals = np.array(
                [[np.nan if v is None else float(v) for v in ch] for ch in channels],
                dtype=np.float64,
            )
            if np.all(np.isnan(vals)):
                raise DataFormatError(f"{path}:{lineno}: instance has no observed values")
            uid = str(rec.get("id", f"r{lineno - 1}"))
            instances.append(Instance(uid, vals))
            labels.append(rec["label"])
    if not instances:
        raise DataFormatError(f"{path}: no records")
    p = instances[0].p
    for inst in instances:
        if inst.p != p:
            raise DataFormatError(f"{path}: channel count differs on instance {inst.uid}")
    if task == REGRESSION:
        targets = np.array([float(v) for v in labels], dtype=np.float64)
    else:
        targets = np.array([str(v) for v in labels], dtype=object)
    return Dataset(SERIES, task, instances, targets)


def save_series_jsonl(d, path):
    if d.kind != SERIES:
        raise ValueError("save_series_jsonl only handles series datasets")
    with open(path, "w", encoding="utf-8") as fh:
        for inst, y in zip(d.instances, d.targets):
            channels = [
                [None if np.isnan(v) else float(v) for v in ch] for ch in inst.values
            ]
            label = float(y) if d.task == REGRESSION else y
            fh.write(json.dumps({"id": inst.uid, "label": label, "channels": channels}) + "\n")


def load_graph_jsonl(path):
    """Load labeled graphs from line-delimited JSON records.

    Each record: ``{"id": ..., "label": ..., "nodes": [...], "edges": [[u, v], ...]}``.
    Edges are undirected and deduplicated; endpoints must index ``nodes``.
    """
    instances = []
    labels = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"{path}:{lineno}: invalid JSON ({exc})")
            nodes = rec.get("nodes")
            if nodes is None or len(nodes) == 0:
                raise DataFormatError(f"{path}:{lineno}: record has no nodes")
            nv = len(nodes)
            edges = set()
            for e in rec.get("edges", []):
                u, v = int(e[0]), int(e[1])
                if not (0 <= u < nv and 0 <= v < nv):
                    raise DataFormatError(
                        f"{path}:{lineno}: edge [{u}, {v}] out of range for {nv} nodes"
                    )
                if u == v:
                    continue  # drop self-loops
                edges.add((min(u, v), max(u, v)))
            uid = str(rec.get("id", f"r{lineno - 1}"))
            instances.append(Instance(uid, graph=Graph(tuple(nodes), tuple(sorted(edges)))))
            labels.append(str(rec["label"]))
    if not instances:
        raise DataFormatError(f"{path}: no records")
    return Dataset(GRAPH, CLASSIFICATION, instances, np.array(labels, dtype=object))


def inject_mcar(d, fraction, seed):
    """Mask entries completely at random.

    Exactly ``floor(fraction * total_entries)`` currently observed entries are
    masked, uniformly without replacement, rebalanced so that every instance
    keeps at least one observed entry.  Deterministic given ``seed``.
    """
    if d.kind == GRAPH:
        raise ValueError("graphs carry no missing-value masks")
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"fraction must be in [0, 1), got {fraction}")
    out = d.copy()
    if fraction == 0.0:
        return out
    rng = np.random.default_rng(seed)

    cells = []  # (instance index, flat position)
    observed_per_inst = []
    total = 0
    for i, inst in enumerate(out.instances):
        flat = inst.values.ravel()
        obs = np.flatnonzero(~np.isnan(flat))
        cells.extend((i, t) for t in obs)
        observed_per_inst.append(len(obs))
        total += flat.size
    n_mask = int(np.floor(fraction * total))
    if n_mask > len(cells):
        raise ValueError("fraction would mask more entries than are observed")

    order = rng.permutation(len(cells))
    chosen = [cells[k] for k in order[:n_mask]]
    spare = [cells[k] for k in order[n_mask:]]

    remaining = list(observed_per_inst)
    for i, _ in chosen:
        remaining[i] -= 1

    # rebalance: any instance losing all entries trades one mask away
    masked_by_inst = {}
    for idx, (i, t) in enumerate(chosen):
        masked_by_inst.setdefault(i, []).append(idx)
    spare_by_donor = [k for k, (i, _) in enumerate(spare) if remaining[i] >= 2]
    for i in sorted(masked_by_inst):
        while remaining[i] == 0:
            give_back = masked_by_inst[i][int(rng.integers(len(masked_by_inst[i])))]
            masked_by_inst[i].remove(give_back)
            remaining[i] += 1
            spare_by_donor = [k for k in spare_by_donor if remaining[spare[k][0]] >= 2]
            if not spare_by_donor:
                raise ValueError(
                    "cannot rebalance MCAR masks: too few observed entries elsewhere"
                )
            pick = int(rng.integers(len(spare_by_donor)))
            k = spare_by_donor.pop(pick)
            chosen[give_back] = spare[k]
            j = spare[k][0]
            remaining[j] -= 1
            masked_by_inst.setdefault(j, []).append(give_back)
            spare_by_donor = [k for k in spare_by_donor if remaining[spare[k][0]] >= 2]

    for i, t in chosen:
        out.instances[i].values.ravel()[t] = np.nan
    out.check_masks()
    return out


def train_test_split(d, test_fraction, stratify=False, seed=0):
    """Split into disjoint train/test datasets; test gets floor(f * N) instances."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    n = d.n
    n_test = int(np.floor(test_fraction * n))

    if not stratify or d.task == REGRESSION:
        perm = rng.permutation(n)
        test_idx = sorted(perm[:n_test].tolist())
    else:
        by_class = {}
        for i, y in enumerate(d.targets):
            by_class.setdefault(y, []).append(i)
        # largest-remainder allocation of the test budget across classes
        quotas = {}
        remainders = []
        assigned = 0
        for c, idxs in sorted(by_class.items(), key=lambda kv: str(kv[0])):
            if len(idxs) == 1:
                warnings.warn(f"class {c!r} has a single instance; kept in train")
                quotas[c] = 0
                continue
            exact = test_fraction * len(idxs)
            quotas[c] = int(np.floor(exact))
            remainders.append((exact - quotas[c], c))
            assigned += quotas[c]
        remainders.sort(key=lambda rc: (-rc[0], str(rc[1])))
        for _, c in remainders:
            if assigned >= n_test:
                break
            if quotas[c] + 1 < len(by_class[c]):
                quotas[c] += 1
                assigned += 1
        test_idx = []
        for c, idxs in sorted(by_class.items(), key=lambda kv: str(kv[0])):
            idxs = np.array(idxs)
            perm = rng.permutation(len(idxs))
            test_idx.extend(idxs[perm[: quotas[c]]].tolist())
        test_idx = sorted(test_idx)

    test_set = set(test_idx)
    train_idx = [i for i in range(n) if i not in test_set]
    return d.subset(train_idx), d.subset(test_idx)


def save_dataset(d, path):
    if d.kind == VECTOR:
        save_csv(d, path)
    elif d.kind == SERIES:
        save_series_jsonl(d, path)
    else:
        raise ValueError("graph datasets are read-only in this artifact")
