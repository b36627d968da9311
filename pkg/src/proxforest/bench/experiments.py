"""Desk-scale experiment drivers.

Each driver is deterministic per seed and emits a BenchReport plus figures.
Real benchmark datasets (penguins, PROTEINS, JapaneseVowels, FloodModeling1,
ArrowHead) are acquired out-of-band by tools/fetch.py; a driver whose data is
absent raises MissingDatasetError with the fetch command to run.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .. import analyze, impute
from ..data import (
    CLASSIFICATION,
    REGRESSION,
    inject_mcar,
    load_csv,
    load_graph_jsonl,
    load_series_jsonl,
    train_test_split,
)
from ..distances import DistanceSpec
from ..forest import EvalCounter, ForestConfig, fit
from ..gap import compute_oob_proximities, symmetrize_and_dissimilarity
from ..meta import LABEL_FORM, attach_meta_distance, predictions_from_callable
from . import knn as knn_mod
from .report import BenchReport, bars_figure, scaling_figure, scatter_figure, write_report
from .synth import make_blobs, make_series_classes, sample_vmf_clusters, standardize

EXPERIMENTS = (
    "penguin",
    "sphere",
    "proteins",
    "vowels",
    "flood",
    "arrowhead_meta",
    "scaling",
    "blobs",
)


class MissingDatasetError(FileNotFoundError):
    """A benchmark dataset has not been fetched into the data directory."""


def _require(data_dir, *names):
    paths = [Path(data_dir) / n for n in names]
    missing = [p for p in paths if not p.exists()]
    if missing:
        raise MissingDatasetError(
            f"missing dataset file(s): {', '.join(str(p) for p in missing)}. "
            f"Run `python tools/fetch.py --data-dir {data_dir}` on a machine with "
            "network access and copy the resulting files here."
        )
    return paths if len(paths) > 1 else paths[0]


# ---------------------------------------------------------------------------
# reusable protocols (also exercised on synthetic data by the test suite)
# ---------------------------------------------------------------------------

def classify_protocol(train, test, forest_cfg, knn_k, knn_spec):
    """Accuracy of a forest vs. the brute-force KNN baseline on one split."""
    model = fit(train, forest_cfg)
    acc_pf = knn_mod.accuracy(test.targets, model.predict_many(test.instances))
    preds = knn_mod.knn_predict(train, test.instances, knn_k, knn_spec)
    acc_knn = knn_mod.accuracy(test.targets, preds)
    return {"acc_pf": acc_pf, "acc_knn": acc_knn}


def sphere_protocol(seed, n_per_class=100, kappa=20.0, mcar=0.5, n_trees=33,
                    separation_deg=60.0):
    """Post-imputation accuracy: GAP-imputed PF vs. KNN-imputed KNN.

    Label-conditioned initialization matters here: it is what makes the GAP
    pipeline supervised end to end, and without it the unsupervised KNN
    imputer wins this comparison.
    """
    full = sample_vmf_clusters(n_per_class, kappa, seed, separation_deg)
    train, test = train_test_split(full, 0.5, stratify=True, seed=seed + 1)
    train_m = inject_mcar(train, mcar, seed + 2)
    test_m = inject_mcar(test, mcar, seed + 3)

    fcfg = ForestConfig(n_trees=n_trees, r=5, seed=seed)
    icfg = impute.ImputeConfig(init="mean", iterations=5, metric="r2",
                               condition_on_label=True)
    rep_train = impute.gap_impute_train(train_m, fcfg, icfg)
    model = fit(rep_train.dataset, fcfg)
    rep_test = impute.gap_impute_test(train_m, test_m, model, icfg)
    acc_pf = knn_mod.accuracy(test.targets, model.predict_many(rep_test.dataset.instances))

    k = 5
    train_knn = knn_mod.knn_impute(train_m, train_m, k)
    test_knn = knn_mod.knn_impute(train_knn, test_m, k)
    preds = knn_mod.knn_predict(train_knn, test_knn.instances, k, DistanceSpec("euclidean"))
    acc_knn = knn_mod.accuracy(test.targets, preds)
    return {
        "acc_pf": acc_pf,
        "acc_knn": acc_knn,
        "hull_ok": rep_train.convex_hull_ok and rep_test.convex_hull_ok,
        "selected_iteration": rep_train.selected_iteration,
        "iteration_scores": rep_train.iteration_scores,
    }


class NearestCentroid:
    """Minimal stand-in for an external pretrained classifier."""

    def __init__(self):
        self.centroids = {}

    def fit(self, dataset):
        by_class = {}
        for inst, y in zip(dataset.instances, dataset.targets):
            by_class.setdefault(y, []).append(inst.values.ravel())
        self.centroids = {c: np.mean(rows, axis=0) for c, rows in by_class.items()}
        return self

    def predict_label(self, inst):
        x = inst.values.ravel()
        best, best_d = None, np.inf
        for c, mu in sorted(self.centroids.items(), key=lambda kv: str(kv[0])):
            dd = float(np.sum((x - mu) ** 2))
            if dd < best_d:
                best, best_d = c, dd
        return best

    def accuracy(self, dataset):
        preds = [self.predict_label(inst) for inst in dataset.instances]
        return knn_mod.accuracy(dataset.targets, preds)


def meta_impute_protocol(train, test, seed, miss_fraction=0.1, n_trees=11):
    """Meta-distance imputation: does GAP imputation beat init-only downstream?

    A nearest-centroid model plays the pretrained classifier.  Its predictions
    on the training set and on the initialized test set define the class-match
    distance; the forest grown under it imputes the MCAR-corrupted test set.
    """
    centroid = NearestCentroid().fit(train)
    test_m = inject_mcar(test, miss_fraction, seed)
    icfg = impute.ImputeConfig(init="linear")
    test_init = impute.initialize(test_m, icfg, use_labels=False)

    table = predictions_from_callable(
        centroid.predict_label, list(train.instances) + list(test_init.instances)
    )
    fcfg = attach_meta_distance(
        ForestConfig(n_trees=n_trees, r=5, seed=seed),
        table,
        LABEL_FORM,
        [inst.uid for inst in train.instances],
    )
    model = fit(train, fcfg)
    rep = impute.gap_impute_test(train, test_m, model, icfg)

    return {
        "acc_model_clean": centroid.accuracy(test),
        "acc_init_only": knn_mod.accuracy(
            test.targets, [centroid.predict_label(i) for i in test_init.instances]
        ),
        "acc_gap_imputed": knn_mod.accuracy(
            test.targets, [centroid.predict_label(i) for i in rep.dataset.instances]
        ),
        "hull_ok": rep.convex_hull_ok,
    }


def scaling_protocol(sizes, seed=0, n_trees=11, n_queries=100, sep=2.2):
    """Mean distance evaluations per query vs. training size, PF against KNN."""
    rows = []
    for n in sizes:
        d = make_blobs((n + n_queries) // 3 + 1, n_classes=3, p=4, sep=sep, seed=seed)
        perm = np.random.default_rng(seed + n).permutation(d.n)
        train = d.subset(sorted(perm[:n].tolist()))
        queries = d.subset(sorted(perm[n : n + n_queries].tolist()))
        model = fit(train, ForestConfig(n_trees=n_trees, r=5, seed=seed))
        counter = EvalCounter()
        model.predict_many(queries.instances, counter)
        rows.append(
            {
                "n": n,
                "pf_evals_per_query": counter.count / queries.n,
                "knn_evals_per_query": float(n),
            }
        )
    logs = np.log2([row["n"] for row in rows])
    evals = np.array([row["pf_evals_per_query"] for row in rows])
    b, a = np.polyfit(logs, evals, 1)
    pred = a + b * logs
    ss_tot = float(np.sum((evals - evals.mean()) ** 2))
    r2 = 1.0 - float(np.sum((evals - pred) ** 2)) / ss_tot if ss_tot else float("nan")
    return rows, {"fit_intercept": float(a), "fit_slope": float(b), "fit_r2": r2}


# ---------------------------------------------------------------------------
# experiment drivers
# ---------------------------------------------------------------------------

def _penguin_load(data_dir):
    d = load_csv(_require(data_dir, "penguins.csv"), label_column="species", id_column="id")
    return d


def penguin_experiment(seeds, data_dir, out_dir=None):
    d = _penguin_load(data_dir)
    report = BenchReport("penguin")
    for seed in seeds:
        train, test = train_test_split(d, 0.2, seed=seed)
        train, test = standardize(train, test)
        row = classify_protocol(
            train, test, ForestConfig(n_trees=11, r=5, seed=seed), 5, DistanceSpec("euclidean")
        )
        row["seed"] = seed
        report.per_seed.append(row)
    diffs = [r["acc_knn"] - r["acc_pf"] for r in report.per_seed]
    report.aggregates = {
        "mean_acc_pf": report.aggregate("acc_pf")[0],
        "mean_acc_knn": report.aggregate("acc_knn")[0],
        "mean_diff_knn_minus_pf": float(np.mean(diffs)),
        "std_diff": float(np.std(diffs)),
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        write_report(report, out_dir)
        # separate 50/50 run for the embedding + outlier figure
        half, _ = train_test_split(d, 0.5, seed=seeds[0])
        half = standardize(half)
        model = fit(half, ForestConfig(n_trees=11, r=5, seed=seeds[0]))
        gap = compute_oob_proximities(model)
        idx, dis = symmetrize_and_dissimilarity(gap)
        coords, _ = analyze.classical_mds(dis, 2)
        out = analyze.outlier_scores(gap, half.targets)
        pos = {i: k for k, i in enumerate(idx)}
        flags = [pos[i] for i in out.flagged if i in pos]
        scatter_figure(
            out_dir / "mds_outliers.png",
            coords,
            [half.targets[i] for i in idx],
            highlight=flags,
            title="GAP proximity MDS embedding (outliers ringed)",
        )
    return report


def sphere_experiment(seeds, data_dir=None, out_dir=None, n_per_class=100, kappa=20.0):
    report = BenchReport("sphere")
    for seed in seeds:
        row = sphere_protocol(seed, n_per_class=n_per_class, kappa=kappa)
        row["seed"] = seed
        row.pop("iteration_scores", None)
        report.per_seed.append(row)
    wins = sum(r["acc_pf"] >= r["acc_knn"] for r in report.per_seed)
    report.aggregates = {
        "mean_acc_pf": report.aggregate("acc_pf")[0],
        "mean_acc_knn": report.aggregate("acc_knn")[0],
        "pf_wins_or_ties": wins,
        "n_seeds": len(seeds),
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        write_report(report, out_dir)
        bars_figure(
            out_dir / "post_imputation_accuracy.png",
            [f"seed {r['seed']}" for r in report.per_seed],
            {
                "PF (GAP-imputed)": [r["acc_pf"] for r in report.per_seed],
                "KNN (KNN-imputed)": [r["acc_knn"] for r in report.per_seed],
            },
            title="Post-imputation test accuracy, 50% MCAR",
        )
    return report


def proteins_experiment(seeds, data_dir, out_dir=None, wl_depth=2, n_trees=11):
    d = load_graph_jsonl(_require(data_dir, "proteins.jsonl"))
    report = BenchReport("proteins")
    spec = DistanceSpec("wl", {"h": wl_depth})
    for seed in seeds:
        rest, test = train_test_split(d, 0.1, stratify=True, seed=seed)
        train, val = train_test_split(rest, 1.0 / 9.0, stratify=True, seed=seed + 1)
        cfg = ForestConfig(n_trees=n_trees, r=5, distances=[spec], seed=seed)
        model = fit(train, cfg)
        row = {
            "seed": seed,
            "acc_pf_val": knn_mod.accuracy(val.targets, model.predict_many(val.instances)),
            "acc_pf": knn_mod.accuracy(test.targets, model.predict_many(test.instances)),
            "acc_knn_val": knn_mod.accuracy(
                val.targets, knn_mod.knn_predict(train, val.instances, 5, spec)
            ),
            "acc_knn": knn_mod.accuracy(
                test.targets, knn_mod.knn_predict(train, test.instances, 5, spec)
            ),
        }
        report.per_seed.append(row)
    report.aggregates = {
        "mean_acc_pf": report.aggregate("acc_pf")[0],
        "mean_acc_knn": report.aggregate("acc_knn")[0],
    }
    if out_dir is not None:
        write_report(report, Path(out_dir))
    return report


def vowels_experiment(seeds, data_dir, out_dir=None, n_trees=25):
    train = load_series_jsonl(_require(data_dir, "vowels_train.jsonl"))
    test = load_series_jsonl(_require(data_dir, "vowels_test.jsonl"))
    specs = [DistanceSpec("dtw_d"), DistanceSpec("dtw_i")]
    report = BenchReport("vowels")
    knn_preds = knn_mod.knn_predict(train, test.instances, 1, DistanceSpec("dtw_d"))
    acc_knn = knn_mod.accuracy(test.targets, knn_preds)
    for seed in seeds:
        cfg = ForestConfig(n_trees=n_trees, r=5, distances=specs, seed=seed)
        model = fit(train, cfg)
        acc = knn_mod.accuracy(test.targets, model.predict_many(test.instances))
        report.per_seed.append({"seed": seed, "acc_pf": acc, "acc_knn": acc_knn})
    report.aggregates = {
        "mean_acc_pf": report.aggregate("acc_pf")[0],
        "acc_knn_k1": acc_knn,
    }
    if out_dir is not None:
        write_report(report, Path(out_dir))
    return report


def flood_experiment(seeds, data_dir, out_dir=None, n_trees=100, r=5):
    train = load_series_jsonl(_require(data_dir, "flood_train.jsonl"), task=REGRESSION)
    test = load_series_jsonl(_require(data_dir, "flood_test.jsonl"), task=REGRESSION)
    spec = DistanceSpec("dtw_d")
    report = BenchReport("flood")
    knn_preds = knn_mod.knn_predict(train, test.instances, 5, spec)
    r2_knn = knn_mod.r2_score(test.targets, knn_preds)
    for seed in seeds:
        cfg = ForestConfig(
            n_trees=n_trees, r=r, distances=[spec], task=REGRESSION, purity="mad", seed=seed
        )
        model = fit(train, cfg)
        r2_pf = knn_mod.r2_score(test.targets, model.predict_many(test.instances))
        report.per_seed.append({"seed": seed, "r2_pf": r2_pf, "r2_knn": r2_knn})
    report.aggregates = {
        "mean_r2_pf": report.aggregate("r2_pf")[0],
        "r2_knn_k5": r2_knn,
    }
    if out_dir is not None:
        write_report(report, Path(out_dir))
    return report


def arrowhead_meta_experiment(seeds, data_dir, out_dir=None, miss_fraction=0.1):
    train = load_series_jsonl(_require(data_dir, "arrowhead_train.jsonl"))
    test = load_series_jsonl(_require(data_dir, "arrowhead_test.jsonl"))
    report = BenchReport("arrowhead_meta")
    for seed in seeds:
        row = meta_impute_protocol(train, test, seed, miss_fraction)
        row["seed"] = seed
        report.per_seed.append(row)
    wins = sum(r["acc_gap_imputed"] >= r["acc_init_only"] for r in report.per_seed)
    report.aggregates = {
        "mean_acc_gap_imputed": report.aggregate("acc_gap_imputed")[0],
        "mean_acc_init_only": report.aggregate("acc_init_only")[0],
        "gap_wins_or_ties": wins,
        "n_seeds": len(seeds),
    }
    if out_dir is not None:
        write_report(report, Path(out_dir))
    return report


def scaling_experiment(seeds, data_dir=None, out_dir=None, sizes=(1000, 2000, 4000, 8000)):
    rows, fit_stats = scaling_protocol(list(sizes), seed=seeds[0])
    report = BenchReport("scaling", per_seed=rows, aggregates=fit_stats)
    if out_dir is not None:
        out_dir = Path(out_dir)
        write_report(report, out_dir)
        scaling_figure(
            out_dir / "scaling.png",
            [row["n"] for row in rows],
            [row["pf_evals_per_query"] for row in rows],
            title="Query cost growth: PF vs brute-force KNN",
        )
    return report


def _sklearn_tables(max_n=500, seed=0):
    from sklearn import datasets as skd

    from ..data import Dataset, Instance

    out = {}
    for name, loader in (
        ("iris", skd.load_iris),
        ("wine", skd.load_wine),
        ("breast_cancer", skd.load_breast_cancer),
        ("digits", skd.load_digits),
    ):
        bunch = loader()
        x, y = bunch.data, bunch.target
        if x.shape[0] > max_n:
            rng = np.random.default_rng(seed)
            keep = rng.choice(x.shape[0], size=max_n, replace=False)
            x, y = x[keep], y[keep]
        instances = [Instance(f"{name}_{i}", row.reshape(-1, 1).astype(float)) for i, row in enumerate(x)]
        labels = np.array([str(v) for v in y], dtype=object)
        out[name] = Dataset("vector", CLASSIFICATION, instances, labels)
    return out


def blobs_experiment(seeds, data_dir=None, out_dir=None):
    """Rank comparison of KNN, PF-11, and PF-100 on five small vector tables."""
    tables = {"blobs": make_blobs(100, n_classes=3, p=4, sep=2.5, seed=0)}
    tables.update(_sklearn_tables())
    report = BenchReport("blobs")
    for name, d in sorted(tables.items()):
        for seed in seeds:
            train, test = train_test_split(d, 0.2, stratify=True, seed=seed)
            train, test = standardize(train, test)
            row = {"dataset": name, "seed": seed}
            row["acc_knn"] = knn_mod.accuracy(
                test.targets,
                knn_mod.knn_predict(train, test.instances, 5, DistanceSpec("euclidean")),
            )
            for trees in (11, 100):
                model = fit(train, ForestConfig(n_trees=trees, r=5, seed=seed))
                row[f"acc_pf{trees}"] = knn_mod.accuracy(
                    test.targets, model.predict_many(test.instances)
                )
            report.per_seed.append(row)
    # mean accuracy per dataset, then mean rank per model (1 = best)
    names = sorted(tables)
    means = {
        m: [
            float(np.mean([r[m] for r in report.per_seed if r["dataset"] == n]))
            for n in names
        ]
        for m in ("acc_knn", "acc_pf11", "acc_pf100")
    }
    ranks = {m: [] for m in means}
    for i in range(len(names)):
        ordering = sorted(means, key=lambda m: -means[m][i])
        for rank, m in enumerate(ordering, start=1):
            ranks[m].append(rank)
    report.aggregates = {f"mean_rank_{m}": float(np.mean(v)) for m, v in ranks.items()}
    report.aggregates.update({f"mean_{m}_{n}": means[m][i] for m in means for i, n in enumerate(names)})
    if out_dir is not None:
        out_dir = Path(out_dir)
        write_report(report, out_dir)
        bars_figure(
            out_dir / "rank_comparison.png",
            names,
            {m: means[m] for m in means},
            title="Mean test accuracy on small vector datasets",
        )
    return report


_DRIVERS = {
    "penguin": penguin_experiment,
    "sphere": sphere_experiment,
    "proteins": proteins_experiment,
    "vowels": vowels_experiment,
    "flood": flood_experiment,
    "arrowhead_meta": arrowhead_meta_experiment,
    "scaling": scaling_experiment,
    "blobs": blobs_experiment,
}

_DEFAULT_SEEDS = {
    "penguin": list(range(10)),
    "sphere": list(range(5)),
    "proteins": [0],
    "vowels": [0, 1, 2],
    "flood": [0],
    "arrowhead_meta": list(range(5)),
    "scaling": [0],
    "blobs": [0, 1, 2],
}


def run_experiment(name, seeds=None, data_dir="data", out_dir=None, **params):
    if name not in _DRIVERS:
        raise ValueError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    seeds = seeds if seeds is not None else _DEFAULT_SEEDS[name]
    return _DRIVERS[name](seeds, data_dir=data_dir, out_dir=out_dir, **params)
