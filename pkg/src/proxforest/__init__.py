"""Generalized proximity forests with GAP proximities.

Distance-based tree ensembles for classification and regression over vectors,
multivariate (unequal-length) series, and labeled graphs, with GAP proximities
driving prediction reconstruction, outlier scoring, and supervised
missing-data imputation.
"""

from .data import (
    CLASSIFICATION,
    GRAPH,
    REGRESSION,
    SERIES,
    VECTOR,
    DataFormatError,
    Dataset,
    Graph,
    Instance,
    inject_mcar,
    load_csv,
    load_graph_jsonl,
    load_series_jsonl,
    save_dataset,
    train_test_split,
)
from .distances import DistanceSpec, register_measure, registry_resolve
from .forest import EvalCounter, Forest, ForestConfig, deserialize, fit, serialize
from .gap import (
    GapMatrix,
    compute_oob_proximities,
    compute_test_proximities,
    proximity_weighted_prediction,
    symmetrize,
    symmetrize_and_dissimilarity,
)
from .impute import ImputationReport, ImputeConfig, gap_impute_test, gap_impute_train, initialize
from .analyze import classical_mds, outlier_scores
from .meta import (
    PredictionTable,
    attach_meta_distance,
    load_predictions,
    predictions_from_callable,
    save_predictions,
)

__version__ = "0.1.0"

__all__ = [
    "CLASSIFICATION",
    "GRAPH",
    "REGRESSION",
    "SERIES",
    "VECTOR",
    "DataFormatError",
    "Dataset",
    "DistanceSpec",
    "EvalCounter",
    "Forest",
    "ForestConfig",
    "GapMatrix",
    "Graph",
    "ImputationReport",
    "ImputeConfig",
    "Instance",
    "PredictionTable",
    "attach_meta_distance",
    "classical_mds",
    "compute_oob_proximities",
    "compute_test_proximities",
    "deserialize",
    "fit",
    "gap_impute_test",
    "gap_impute_train",
    "initialize",
    "inject_mcar",
    "load_csv",
    "load_graph_jsonl",
    "load_predictions",
    "load_series_jsonl",
    "outlier_scores",
    "predictions_from_callable",
    "proximity_weighted_prediction",
    "register_measure",
    "registry_resolve",
    "save_dataset",
    "save_predictions",
    "serialize",
    "symmetrize",
    "symmetrize_and_dissimilarity",
    "train_test_split",
]
