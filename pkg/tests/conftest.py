import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from proxforest.data import CLASSIFICATION, REGRESSION, VECTOR, Dataset, Instance

DATA_DIR = Path(__file__).parent.parent / "data"


def vector_dataset(x, labels, task=CLASSIFICATION, categorical=None, names=None):
    """Build a vector dataset from a 2-D array (NaN = missing)."""
    x = np.asarray(x, dtype=float)
    instances = [Instance(f"v{i}", row.reshape(-1, 1).copy()) for i, row in enumerate(x)]
    if task == REGRESSION:
        targets = np.asarray(labels, dtype=np.float64)
    else:
        targets = np.array([str(l) for l in labels], dtype=object)
    return Dataset(VECTOR, task, instances, targets,
                   feature_names=names, categorical=categorical or {})


def random_vector_dataset(rng, n, p, n_classes=2, task=CLASSIFICATION, missing=0.0):
    x = rng.normal(size=(n, p))
    if missing:
        mask = rng.uniform(size=x.shape) < missing
        for i in range(n):  # keep at least one observed entry per instance
            if mask[i].all():
                mask[i, rng.integers(p)] = False
        x[mask] = np.nan
    if task == REGRESSION:
        y = rng.normal(size=n)
    else:
        y = rng.integers(n_classes, size=n)
    return vector_dataset(x, y, task)


def require_dataset(*names):
    missing = [n for n in names if not (DATA_DIR / n).exists()]
    if missing:
        pytest.skip(
            f"dataset file(s) {', '.join(missing)} not present; run "
            f"`python tools/fetch.py --data-dir {DATA_DIR}` on a machine with "
            "network access and copy the results here"
        )
    paths = [DATA_DIR / n for n in names]
    return paths[0] if len(paths) == 1 else paths


@pytest.fixture
def rng():
    return np.random.default_rng(0)
