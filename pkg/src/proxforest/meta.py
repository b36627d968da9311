"""Model-informed distances backed by a static table of classifier outputs.

Any pretrained classifier's predictions (hard labels or probability vectors)
define a distance between instances; a forest grown under such a distance can
then act as an imputer for that classifier's data.
"""

from __future__ import annotations

import csv

import numpy as np

LABEL_FORM = "label"
PROB_FORM = "prob"


class PredictionLookupError(KeyError):
    """An instance id queried against a prediction table is absent."""


class PredictionTable:
    """Immutable map from instance id to a predicted label or probability row."""

    def __init__(self, entries, form):
        if form not in (LABEL_FORM, PROB_FORM):
            raise ValueError(f"unknown table form {form!r}")
        self.form = form
        self._entries = {}
        for uid, value in entries:
            uid = str(uid)
            if uid in self._entries:
                raise ValueError(f"duplicate prediction id {uid!r}")
            if form == PROB_FORM:
                row = np.asarray(value, dtype=np.float64)
                if row.ndim != 1 or row.size < 2:
                    raise ValueError(f"probability row for {uid!r} must have >= 2 entries")
                if np.any(row < 0) or abs(float(row.sum()) - 1.0) > 1e-6:
                    raise ValueError(f"probability row for {uid!r} is not normalized")
                value = row
            self._entries[uid] = value

    def __len__(self):
        return len(self._entries)

    def __contains__(self, uid):
        return str(uid) in self._entries

    def lookup(self, uid):
        try:
            return self._entries[str(uid)]
        except KeyError:
            raise PredictionLookupError(f"no prediction recorded for instance {uid!r}")

    def ids(self):
        return set(self._entries)

    @property
    def n_classes(self):
        if self.form == PROB_FORM:
            return len(next(iter(self._entries.values())))
        return len(set(self._entries.values()))

    def missing_ids(self, uids):
        return [u for u in uids if str(u) not in self._entries]


def load_predictions(path):
    """Load a prediction table from CSV.

    Two layouts are accepted (see docs/formats.md): ``id,label`` for hard
    labels, or ``id,p_<c1>,p_<c2>,...`` for probability rows.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return PredictionTable([], LABEL_FORM)
        rows = [row for row in reader if row]
    if header[0] != "id":
        raise ValueError(f"{path}: first column must be 'id', got {header[0]!r}")
    if len(header) == 2 and header[1] == "label":
        return PredictionTable([(row[0], row[1]) for row in rows], LABEL_FORM)
    return PredictionTable(
        [(row[0], [float(c) for c in row[1:]]) for row in rows], PROB_FORM
    )


def save_predictions(table, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if table.form == LABEL_FORM:
            writer.writerow(["id", "label"])
            for uid in sorted(table._entries):
                writer.writerow([uid, table._entries[uid]])
        else:
            m = table.n_classes
            writer.writerow(["id"] + [f"p_{k}" for k in range(m)])
            for uid in sorted(table._entries):
                writer.writerow([uid] + [repr(float(v)) for v in table._entries[uid]])


def meta_class_distance(a, b, table):
    """0 if the pretrained model predicts the same label for both, else 1."""
    return 0.0 if table.lookup(a.uid) == table.lookup(b.uid) else 1.0


def meta_prob_distance(a, b, table):
    """Euclidean distance between the model's probability rows for a and b."""
    za = table.lookup(a.uid)
    zb = table.lookup(b.uid)
    if za.shape != zb.shape:
        raise ValueError(
            f"probability dimension mismatch: {za.shape} vs {zb.shape} "
            f"for {a.uid!r}/{b.uid!r}"
        )
    return float(np.linalg.norm(za - zb))


def attach_meta_distance(forest_cfg, table, form, train_uids):
    """Return a copy of ``forest_cfg`` whose distance list is the meta-distance.

    ``train_uids`` are checked for table coverage up front so gaps surface
    before any tree is grown.
    """
    from .distances import DistanceSpec  # deferred: distances imports this module

    missing = table.missing_ids(train_uids)
    if missing:
        shown = ", ".join(repr(u) for u in missing[:5])
        raise ValueError(
            f"prediction table misses {len(missing)} training ids (first: {shown})"
        )
    name = "meta_class" if form == LABEL_FORM else "meta_prob"
    if form != table.form:
        raise ValueError(f"table holds {table.form!r} predictions, requested {form!r}")
    if form == PROB_FORM and table.n_classes < 2:
        raise ValueError("degenerate probability space: m must be >= 2")
    cfg = forest_cfg.replace(distances=[DistanceSpec(name, {"predictions": table})])
    return cfg


def predictions_from_callable(model, instances, form=LABEL_FORM):
    """Materialize a PredictionTable by calling ``model`` on each instance.

    ``model`` receives the Instance and returns a label (label form) or a
    probability row (prob form).  Exceptions propagate with the instance id.
    """
    entries = []
    for inst in instances:
        try:
            out = model(inst)
        except Exception as exc:
            raise RuntimeError(f"prediction callable failed on instance {inst.uid!r}: {exc}")
        entries.append((inst.uid, out))
    return PredictionTable(entries, form)
