"""Bit-for-bit parity between the bindings and the CLI on shared seeds.

Each test runs the CLI on a dataset file, then rebuilds the same run through
the bindings from the arrays of that very file, and compares artifact bytes.
"""

import numpy as np
import pytest

import proxforest as pf
from proxforest.bench.knn import accuracy
from proxforest.bench.synth import make_blobs
from proxforest.cli import EXIT_OK, main as cli_main
from proxforest.data import save_csv
import proxforest_bindings as pb

from conftest import DATA_DIR, dataset_arrays, require_dataset

SEED = 11


def _write_csv(d, path):
    save_csv(d, path)
    return str(path)


def _bindings_config(d, n_trees, seed):
    return {
        "ids": [inst.uid for inst in d.instances],
        "feature_names": d.feature_names,
        "categorical": d.categorical,
        "n_trees": n_trees,
        "seed": seed,
    }


def _fit_parity(dataset, tmp_path, n_trees=11):
    """CLI train vs bindings fit on the same file; returns both model paths."""
    csv_path = _write_csv(dataset, tmp_path / "train.csv")
    rc = cli_main([
        "train", "--data", csv_path, "--label", "label", "--id-column", "id",
        "--trees", str(n_trees), "--seed", str(SEED), "--out", str(tmp_path / "cli"),
    ])
    assert rc == EXIT_OK

    loaded = pf.load_csv(csv_path, "label", id_column="id")
    x, y, ids = dataset_arrays(loaded)
    handle = pb.fit(x, y, _bindings_config(loaded, n_trees, SEED))
    handle.save(tmp_path / "bindings.pf")
    return handle, loaded, tmp_path / "cli" / "model.pf", tmp_path / "bindings.pf"


def test_fit_parity_blobs(tmp_path):
    d = make_blobs(n_per_class=20, n_classes=3, p=4, sep=3.0, seed=2)
    _, _, cli_model, bind_model = _fit_parity(d, tmp_path)
    assert cli_model.read_bytes() == bind_model.read_bytes()


def test_fit_parity_penguins(tmp_path):
    require_dataset("penguins.csv")
    d = pf.load_csv(DATA_DIR / "penguins.csv", "species", id_column="id")
    _, _, cli_model, bind_model = _fit_parity(d, tmp_path)
    assert cli_model.read_bytes() == bind_model.read_bytes()


def test_predict_parity_blobs(tmp_path):
    train = make_blobs(n_per_class=20, n_classes=3, p=4, sep=3.0, seed=2)
    queries = make_blobs(n_per_class=6, n_classes=3, p=4, sep=3.0, seed=9)
    handle, _, cli_model, _ = _fit_parity(train, tmp_path)

    qcsv = _write_csv(queries, tmp_path / "queries.csv")
    rc = cli_main([
        "predict", "--model", str(cli_model), "--data", qcsv, "--label", "label",
        "--id-column", "id", "--out", str(tmp_path / "cli_pred"),
    ])
    assert rc == EXIT_OK

    qloaded = pf.load_csv(qcsv, "label", id_column="id")
    qx, _, qids = dataset_arrays(qloaded)
    preds = pb.predict(handle, qx, ids=qids)
    lines = "id,label\n" + "".join(f"{u},{p}\n" for u, p in zip(qids, preds))
    assert (tmp_path / "cli_pred" / "predictions.csv").read_text() == lines


def test_predict_parity_penguins(tmp_path):
    require_dataset("penguins.csv")
    full = pf.load_csv(DATA_DIR / "penguins.csv", "species", id_column="id")
    train = full.subset(range(0, full.n, 2))
    queries = full.subset(range(1, full.n, 2))
    handle, _, cli_model, _ = _fit_parity(train, tmp_path)

    qcsv = _write_csv(queries, tmp_path / "queries.csv")
    rc = cli_main([
        "predict", "--model", str(cli_model), "--data", qcsv, "--label", "label",
        "--id-column", "id", "--out", str(tmp_path / "cli_pred"),
    ])
    assert rc == EXIT_OK
    qloaded = pf.load_csv(qcsv, "label", id_column="id")
    qx, _, qids = dataset_arrays(qloaded)
    preds = pb.predict(handle, qx, ids=qids)
    lines = "id,label\n" + "".join(f"{u},{p}\n" for u, p in zip(qids, preds))
    assert (tmp_path / "cli_pred" / "predictions.csv").read_text() == lines


def test_impute_parity_blobs(tmp_path):
    d = pf.inject_mcar(make_blobs(n_per_class=15, n_classes=3, p=4, sep=3.0, seed=2),
                       0.15, seed=6)
    csv_path = _write_csv(d, tmp_path / "holey.csv")
    rc = cli_main([
        "impute", "--data", csv_path, "--label", "label", "--id-column", "id",
        "--trees", "9", "--seed", str(SEED), "--iterations", "2", "--metric", "r2",
        "--out", str(tmp_path / "cli_imp"),
    ])
    assert rc == EXIT_OK

    loaded = pf.load_csv(csv_path, "label", id_column="id")
    x, y, ids = dataset_arrays(loaded)
    report = pb.impute(x, y, _bindings_config(loaded, 9, SEED),
                       {"iterations": 2, "metric": "r2"})
    save_csv(report.dataset, tmp_path / "bindings_imputed.csv")
    assert (tmp_path / "cli_imp" / "imputed.csv").read_bytes() == (
        tmp_path / "bindings_imputed.csv"
    ).read_bytes()


def test_impute_parity_penguins(tmp_path):
    require_dataset("penguins.csv")
    full = pf.load_csv(DATA_DIR / "penguins.csv", "species", id_column="id")
    d = pf.inject_mcar(full.subset(range(0, full.n, 3)), 0.1, seed=6)
    csv_path = _write_csv(d, tmp_path / "holey.csv")
    rc = cli_main([
        "impute", "--data", csv_path, "--label", "label", "--id-column", "id",
        "--trees", "9", "--seed", str(SEED), "--iterations", "2", "--metric", "r2",
        "--out", str(tmp_path / "cli_imp"),
    ])
    assert rc == EXIT_OK
    loaded = pf.load_csv(csv_path, "label", id_column="id")
    x, y, ids = dataset_arrays(loaded)
    report = pb.impute(x, y, _bindings_config(loaded, 9, SEED),
                       {"iterations": 2, "metric": "r2"})
    save_csv(report.dataset, tmp_path / "bindings_imputed.csv")
    assert (tmp_path / "cli_imp" / "imputed.csv").read_bytes() == (
        tmp_path / "bindings_imputed.csv"
    ).read_bytes()


# --------------------------------------------------------------- meta flow


def _nearest_centroid(train):
    """A stand-in pretrained classifier: class centroids on complete features."""
    stack = np.stack([inst.values[:, 0] for inst in train.instances])
    classes = train.class_labels
    centroids = {
        c: np.nanmean(stack[[y == c for y in train.targets]], axis=0) for c in classes
    }

    def model(inst):
        v = np.nan_to_num(inst.values[:, 0])
        return min(classes, key=lambda c: float(np.sum((v - centroids[c]) ** 2)))

    return model


def test_callable_table_drives_meta_imputation(tmp_path):
    train = make_blobs(n_per_class=20, n_classes=3, p=4, sep=3.0, seed=3)
    test_clean = make_blobs(n_per_class=10, n_classes=3, p=4, sep=3.0, seed=14)
    test_clean.instances = [
        pf.Instance(f"t{i}", inst.values) for i, inst in enumerate(test_clean.instances)
    ]
    test = pf.inject_mcar(test_clean, 0.1, seed=1)
    init = pf.initialize(test, pf.ImputeConfig(init="mean"), use_labels=False)

    model = _nearest_centroid(train)
    path = tmp_path / "preds.csv"
    table = pb.predictions_from_callable(
        model,
        [inst.values[:, 0] for inst in train.instances]
        + [inst.values[:, 0] for inst in init.instances],
        ids=[inst.uid for inst in train.instances] + [inst.uid for inst in init.instances],
        path=path,
    )
    loaded = pf.load_predictions(path)

    x, y, ids = dataset_arrays(train)
    handle = pb.fit(x, y, {
        "ids": ids, "n_trees": 11, "seed": 0,
        "distances": [("meta_class", {"predictions": loaded})],
    })
    tx, ty, tids = dataset_arrays(test)
    report = pb.impute(tx, ty, handle=handle, impute_config={"iterations": 1},
                       donors=x, donor_labels=y, donor_ids=ids, ids=tids)

    for inst in report.dataset.instances:
        assert not np.isnan(inst.values).any()
    acc_imputed = accuracy(ty, [model(inst) for inst in report.dataset.instances])
    acc_init = accuracy(ty, [model(inst) for inst in init.instances])
    assert table.form == "label"
    assert acc_imputed >= acc_init
