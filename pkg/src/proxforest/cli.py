"""Command-line surface tying the library into reproducible runs.

Every command validates its configuration up front, writes its artifacts into
--out, and finishes by writing a manifest (full argv, seed, and a sha256 per
artifact) so any run can be reproduced byte-for-byte with `rerun`.

Exit codes: 0 success, 2 usage, 3 data error, 4 internal.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import analyze, data as data_mod, gap as gap_mod, impute as impute_mod, meta as meta_mod
from .bench import MissingDatasetError, run_experiment
from .bench.knn import accuracy as _accuracy, r2_score as _r2
from .data import CLASSIFICATION, DataFormatError, REGRESSION
from .distances import DistanceResolutionError, DistanceSpec
from .forest import ForestConfig, ModelFormatError, deserialize, fit, serialize
from .meta import PredictionLookupError

log = logging.getLogger("proxforest.cli")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4

_DATA_ERRORS = (
    DataFormatError,
    ModelFormatError,
    DistanceResolutionError,
    MissingDatasetError,
    PredictionLookupError,
    FileNotFoundError,
    ValueError,
)


def _parse_dist(text):
    """Parse 'name' or 'name:key=val,key=val' into a DistanceSpec."""
    name, _, rest = text.partition(":")
    params = {}
    if rest:
        for piece in rest.split(","):
            key, _, val = piece.partition("=")
            if not _:
                raise argparse.ArgumentTypeError(f"bad distance param {piece!r}")
            try:
                params[key] = int(val)
            except ValueError:
                params[key] = val
    return DistanceSpec(name, params)


def _load_any(path, label=None, task=CLASSIFICATION, id_column=None):
    path = Path(path)
    if path.suffix == ".csv":
        if label is None:
            raise ValueError("--label is required for CSV datasets")
        return data_mod.load_csv(path, label, task=task, id_column=id_column)
    if path.suffix == ".jsonl":
        with open(path, encoding="utf-8") as fh:
            first = fh.readline()
        rec = json.loads(first)
        if "nodes" in rec:
            return data_mod.load_graph_jsonl(path)
        return data_mod.load_series_jsonl(path, task=task)
    raise DataFormatError(f"unrecognized dataset extension {path.suffix!r} (want .csv or .jsonl)")


class OutDir:
    """Output directory that tracks written artifacts for the manifest."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)

    def file(self, name):
        return self.path / name

    def write_manifest(self, args):
        artifacts = {}
        for p in sorted(self.path.rglob("*")):
            if p.is_file() and p.name != "manifest.json":
                artifacts[str(p.relative_to(self.path))] = hashlib.sha256(
                    p.read_bytes()
                ).hexdigest()
        manifest = {
            "command": args.command,
            "argv": getattr(args, "_argv", sys.argv[1:]),
            "seed": getattr(args, "seed", None),
            "config": {
                k: v for k, v in sorted(vars(args).items())
                if k != "func" and not k.startswith("_")
            },
            "artifacts": artifacts,
        }
        with open(self.file("manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, default=str)
            fh.write("\n")


def _forest_config(args):
    distances = args.dist or [DistanceSpec("euclidean")]
    purity = args.purity
    if purity is None:
        purity = "gini" if args.task == CLASSIFICATION else "variance"
    cfg = ForestConfig(
        n_trees=args.trees,
        r=args.r,
        distances=distances,
        distance_choice=args.distance_choice,
        task=args.task,
        purity=purity,
        max_depth=args.max_depth,
        min_leaf=args.min_leaf,
        seed=args.seed,
        n_threads=args.threads,
    )
    if args.meta_predictions:
        table = meta_mod.load_predictions(args.meta_predictions)
        cfg = cfg.replace(distances=[DistanceSpec(
            "meta_class" if table.form == meta_mod.LABEL_FORM else "meta_prob",
            {"predictions": table},
        )])
    cfg.validate()
    return cfg


def _add_forest_flags(sub):
    sub.add_argument("--trees", type=int, default=11)
    sub.add_argument("--r", type=int, default=5)
    sub.add_argument("--dist", action="append", type=_parse_dist, default=None,
                     help="distance spec, e.g. euclidean, dtw_d:w=3, wl:h=2 (repeatable)")
    sub.add_argument("--distance-choice", choices=["per-node", "per-tree"], default="per-node")
    sub.add_argument("--purity", choices=["gini", "variance", "mad"], default=None)
    sub.add_argument("--max-depth", type=int, default=None)
    sub.add_argument("--min-leaf", type=int, default=1)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--threads", type=int,
                     default=int(os.environ.get("PROXFOREST_THREADS", "1")))
    sub.add_argument("--meta-predictions", default=None,
                     help="predictions CSV turning a pretrained model into the distance")


def _add_data_flags(sub):
    sub.add_argument("--data", required=True)
    sub.add_argument("--label", default=None, help="label column (CSV datasets)")
    sub.add_argument("--id-column", default=None)
    sub.add_argument("--task", choices=[CLASSIFICATION, REGRESSION], default=CLASSIFICATION)


def cmd_train(args):
    d = _load_any(args.data, args.label, args.task, args.id_column)
    cfg = _forest_config(args)
    out = OutDir(args.out)
    model = fit(d, cfg)
    serialize(model, out.file("model.pf"))

    train_preds = model.predict_many(d.instances)
    oob_preds, covered = model.predict_oob()
    lines = []
    if args.task == CLASSIFICATION:
        lines.append(f"train accuracy: {_accuracy(d.targets, train_preds):.4f}")
        cov = [i for i in range(d.n) if covered[i]]
        if cov:
            lines.append(
                f"oob accuracy: {_accuracy([d.targets[i] for i in cov], [oob_preds[i] for i in cov]):.4f}"
            )
    else:
        lines.append(f"train R2: {_r2(d.targets, train_preds):.4f}")
        cov = [i for i in range(d.n) if covered[i]]
        if cov:
            lines.append(f"oob R2: {_r2([d.targets[i] for i in cov], [oob_preds[i] for i in cov]):.4f}")
    lines.append(f"oob coverage: {int(covered.sum())}/{d.n}")
    out.file("metrics.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    out.write_manifest(args)


def cmd_predict(args):
    model = deserialize(args.model)
    d = _load_any(args.data, args.label, model.cfg.task, args.id_column)
    out = OutDir(args.out)
    preds = model.predict_many(d.instances)
    with open(out.file("predictions.csv"), "w", encoding="utf-8") as fh:
        fh.write("id,label\n" if model.cfg.task == CLASSIFICATION else "id,value\n")
        for inst, p in zip(d.instances, preds):
            fh.write(f"{inst.uid},{p}\n")
    if model.cfg.task == CLASSIFICATION:
        print(f"accuracy: {_accuracy(d.targets, preds):.4f}")
    else:
        print(f"R2: {_r2(d.targets, preds):.4f}")
    out.write_manifest(args)


def cmd_prox(args):
    model = deserialize(args.model)
    out = OutDir(args.out)
    train_uid = lambda i: model.train.instances[i].uid  # noqa: E731
    if args.test:
        test = _load_any(args.test, args.label, model.cfg.task, args.id_column)
        matrix = gap_mod.compute_test_proximities(model, test)
        row_uid = lambda i: test.instances[i].uid  # noqa: E731
        gap_mod.write_triplets(matrix, out.file("proximities.txt"), row_uid, train_uid)
    else:
        matrix = gap_mod.compute_oob_proximities(model)
        gap_mod.write_triplets(matrix, out.file("proximities.txt"), train_uid, train_uid)
        idx, dis = gap_mod.symmetrize_and_dissimilarity(matrix)
        if len(idx) <= 2000:
            idx_uids = [train_uid(i) for i in idx]
            gap_mod.write_dense_csv(dis, out.file("dissimilarity.csv"), idx_uids)
            _, psym = gap_mod.symmetrize(matrix)
            gap_mod.write_dense_csv(psym, out.file("proximities_dense.csv"), idx_uids)
        if matrix.uncovered:
            print(f"rows without OOB trees (omitted): {len(matrix.uncovered)}")
    out.write_manifest(args)


def cmd_outliers(args):
    model = deserialize(args.model)
    out = OutDir(args.out)
    matrix = gap_mod.compute_oob_proximities(model)
    report = analyze.outlier_scores(matrix, model.train.targets, top_q=args.top_q)
    analyze.write_outlier_csv(report, out.file("outliers.csv"),
                              uid=lambda i: model.train.instances[i].uid)
    out.write_manifest(args)


def cmd_mds(args):
    model = deserialize(args.model)
    out = OutDir(args.out)
    matrix = gap_mod.compute_oob_proximities(model)
    idx, dis = gap_mod.symmetrize_and_dissimilarity(matrix)
    coords, eigvals = analyze.classical_mds(dis, args.dims)
    analyze.write_embedding_csv(coords, out.file("embedding.csv"),
                                uid=lambda k: model.train.instances[idx[k]].uid)
    print("eigenvalues:", " ".join(f"{v:.6g}" for v in eigvals))
    out.write_manifest(args)


def _impute_config(args):
    return impute_mod.ImputeConfig(
        init=args.init,
        iterations=args.iterations,
        metric=args.metric,
        knn_k=args.knn_k,
        condition_on_label=args.condition_on_label,
    )


def cmd_impute(args):
    out = OutDir(args.out)
    icfg = _impute_config(args)
    if args.model:
        # test-set mode: donors come from the original training data
        if not args.donors:
            raise ValueError("--donors (original training dataset) is required with --model")
        model = deserialize(args.model)
        donors = _load_any(args.donors, args.label, model.cfg.task, args.id_column)
        test = _load_any(args.data, args.label, model.cfg.task, args.id_column)
        report = impute_mod.gap_impute_test(donors, test, model, icfg)
        imputed = report.dataset
    else:
        d = _load_any(args.data, args.label, args.task, args.id_column)
        report = impute_mod.gap_impute_train(d, _forest_config(args), icfg)
        imputed = report.dataset
    ext = ".csv" if imputed.kind == data_mod.VECTOR else ".jsonl"
    data_mod.save_dataset(imputed, out.file(f"imputed{ext}"))
    with open(out.file("impute_report.json"), "w", encoding="utf-8") as fh:
        json.dump(
            {
                "iteration_scores": report.iteration_scores,
                "per_feature_scores": [
                    {str(k): v for k, v in row.items()} for row in report.per_feature_scores
                ],
                "selected_iteration": report.selected_iteration,
                "fallback_counts": report.fallback_counts,
                "convex_hull_ok": report.convex_hull_ok,
            },
            fh,
            indent=2,
            default=float,
        )
        fh.write("\n")
    if report.iteration_scores:
        print(f"selected iteration {report.selected_iteration} "
              f"({args.metric}={report.iteration_scores[report.selected_iteration]:.6g})")
    out.write_manifest(args)


def cmd_bench(args):
    out = OutDir(args.out)
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    params = {}
    if args.sizes:
        params["sizes"] = [int(s) for s in args.sizes.split(",")]
    if args.kappa is not None:
        params["kappa"] = args.kappa
    if args.n_per_class is not None:
        params["n_per_class"] = args.n_per_class
    report = run_experiment(args.name, seeds=seeds, data_dir=args.data_dir,
                            out_dir=out.path, **params)
    for k, v in sorted(report.aggregates.items()):
        print(f"{k}: {v}")
    out.write_manifest(args)


def cmd_rerun(args):
    with open(args.manifest, encoding="utf-8") as fh:
        manifest = json.load(fh)
    argv = manifest["argv"]
    print(f"re-running: proxforest {' '.join(argv)}")
    return main(argv)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="proxforest",
        description="Generalized proximity forests: train, predict, proximities, "
        "outliers, MDS, imputation, and benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a forest and write a model file")
    _add_data_flags(p)
    _add_forest_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict a dataset with a saved model")
    p.add_argument("--model", required=True)
    _add_data_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("prox", help="export GAP proximities (OOB or test-to-train)")
    p.add_argument("--model", required=True)
    p.add_argument("--test", default=None)
    p.add_argument("--label", default=None)
    p.add_argument("--id-column", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prox)

    p = sub.add_parser("outliers", help="within-class GAP outlier scores")
    p.add_argument("--model", required=True)
    p.add_argument("--top-q", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_outliers)

    p = sub.add_parser("mds", help="classical MDS embedding of GAP dissimilarities")
    p.add_argument("--model", required=True)
    p.add_argument("--dims", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mds)

    p = sub.add_parser("impute", help="GAP-based imputation (train or test mode)")
    _add_data_flags(p)
    _add_forest_flags(p)
    p.add_argument("--model", default=None, help="saved model: switch to test-set mode")
    p.add_argument("--donors", default=None, help="original training dataset (test mode)")
    p.add_argument("--init", choices=["mean", "median", "knn", "linear"], default="mean")
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--metric", choices=["r2", "rmse", "mae", "f1", "accuracy"], default="r2")
    p.add_argument("--knn-k", type=int, default=5)
    p.add_argument("--condition-on-label", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("bench", help="run a benchmark experiment")
    p.add_argument("name")
    p.add_argument("--seeds", default=None, help="comma-separated seed list")
    p.add_argument("--data-dir", default="data")
    p.add_argument("--sizes", default=None, help="scaling sizes, comma-separated")
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--n-per-class", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("rerun", help="re-execute a run from its manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None):
    logging.basicConfig(level=os.environ.get("PROXFOREST_LOGLEVEL", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = [str(a) for a in (argv if argv is not None else sys.argv[1:])]
    try:
        rc = args.func(args)
        return EXIT_OK if rc is None else rc
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
