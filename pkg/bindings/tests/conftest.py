from pathlib import Path

import numpy as np
import pytest

import proxforest as pf

DATA_DIR = Path(__file__).resolve().parents[2] / "data"


def require_dataset(*names):
    """Skip with the fetch instruction when a real dataset file is absent."""
    missing = [n for n in names if not (DATA_DIR / n).exists()]
    if missing:
        pytest.skip(
            f"dataset file(s) {missing} not present; run "
            f"`python tools/fetch.py --data-dir {DATA_DIR}` on a machine with network access"
        )


def dataset_arrays(d):
    """Decompose a vector Dataset into the raw pieces the bindings accept."""
    x = np.stack([inst.values[:, 0] for inst in d.instances])
    ids = [inst.uid for inst in d.instances]
    return x, list(d.targets), ids


@pytest.fixture
def blobs():
    from proxforest.bench.synth import make_blobs

    return make_blobs(n_per_class=15, n_classes=3, p=4, sep=3.0, seed=5)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def vector_handle(blobs):
    import proxforest_bindings as pb

    x, y, ids = dataset_arrays(blobs)
    return pb.fit(x, y, {"ids": ids, "n_trees": 7, "seed": 3})


def assert_complete(d):
    for inst in d.instances:
        assert not np.isnan(inst.values).any(), f"{inst.uid} still has missing entries"


def assert_observed_preserved(before, after):
    for a, b in zip(before.instances, after.instances):
        ok = ~np.isnan(a.values)
        assert np.array_equal(a.values[ok], b.values[ok]), f"observed cells changed on {a.uid}"


__all__ = [
    "DATA_DIR",
    "assert_complete",
    "assert_observed_preserved",
    "dataset_arrays",
    "require_dataset",
]
