"""Benchmark harness: synthetic generators, KNN baseline, experiment drivers."""

from .experiments import EXPERIMENTS, MissingDatasetError, run_experiment
from .knn import accuracy, knn_impute, knn_predict, r2_score
from .synth import (
    make_blobs,
    make_graph_classes,
    make_series_classes,
    make_series_regression,
    sample_vmf_clusters,
    standardize,
)

__all__ = [
    "EXPERIMENTS",
    "MissingDatasetError",
    "accuracy",
    "knn_impute",
    "knn_predict",
    "make_blobs",
    "make_graph_classes",
    "make_series_classes",
    "make_series_regression",
    "r2_score",
    "run_experiment",
    "sample_vmf_clusters",
    "standardize",
]
