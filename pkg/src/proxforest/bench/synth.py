"""Synthetic dataset generators for benchmarks and tests."""

from __future__ import annotations

import numpy as np

from ..data import CLASSIFICATION, GRAPH, REGRESSION, SERIES, VECTOR, Dataset, Graph, Instance


def _wood_vmf_w(rng, kappa, d=3):
    """Marginal cosine W of a vMF sample via Wood's rejection sampler."""
    b = (-2 * kappa + np.sqrt(4 * kappa**2 + (d - 1) ** 2)) / (d - 1)
    x0 = (1 - b) / (1 + b)
    c = kappa * x0 + (d - 1) * np.log(1 - x0**2)
    while True:
        z = rng.beta((d - 1) / 2, (d - 1) / 2)
        u = rng.uniform()
        w = (1 - (1 + b) * z) / (1 - (1 - b) * z)
        if kappa * w + (d - 1) * np.log(1 - x0 * w) - c >= np.log(u):
            return w


def _rotation_to(target):
    """Rotation matrix taking e3 to the unit vector ``target``."""
    e3 = np.array([0.0, 0.0, 1.0])
    v = np.cross(e3, target)
    s = np.linalg.norm(v)
    c = float(e3 @ target)
    if s < 1e-12:
        return np.eye(3) if c > 0 else np.diag([1.0, -1.0, -1.0])
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx * ((1 - c) / s**2)


def sample_vmf(rng, mu, kappa, n):
    """n unit vectors on S^2 from a von Mises-Fisher distribution around mu."""
    rot = _rotation_to(np.asarray(mu, dtype=float) / np.linalg.norm(mu))
    out = np.empty((n, 3))
    for i in range(n):
        w = _wood_vmf_w(rng, kappa)
        theta = rng.uniform(0, 2 * np.pi)
        perp = np.sqrt(max(0.0, 1 - w * w))
        out[i] = rot @ np.array([perp * np.cos(theta), perp * np.sin(theta), w])
    return out


def sample_vmf_clusters(n_per_class, kappa, seed, separation_deg=45.0):
    """Two partially overlapping vMF clusters on the unit sphere.

    Class mean directions are drawn by an independent random rotation: the
    first is uniform on S^2, the second is the first rotated by
    ``separation_deg`` about a random orthogonal axis.
    """
    if kappa <= 0:
        raise ValueError("kappa must be > 0")
    rng = np.random.default_rng(seed)
    mu0 = rng.normal(size=3)
    mu0 /= np.linalg.norm(mu0)
    axis = np.cross(mu0, rng.normal(size=3))
    axis /= np.linalg.norm(axis)
    ang = np.deg2rad(separation_deg)
    # Rodrigues rotation of mu0 about axis
    mu1 = mu0 * np.cos(ang) + np.cross(axis, mu0) * np.sin(ang)

    pts0 = sample_vmf(rng, mu0, kappa, n_per_class)
    pts1 = sample_vmf(rng, mu1, kappa, n_per_class)
    instances = []
    labels = []
    for c, pts in enumerate((pts0, pts1)):
        for i, x in enumerate(pts):
            instances.append(Instance(f"c{c}_{i}", x.reshape(3, 1).astype(float)))
            labels.append(f"class{c}")
    return Dataset(VECTOR, CLASSIFICATION, instances, np.array(labels, dtype=object),
                   feature_names=["x", "y", "z"])


def make_blobs(n_per_class, n_classes=3, p=4, sep=3.0, seed=0):
    """Isotropic Gaussian blobs with unit spread and centers ``sep`` apart."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(n_classes, p))
    centers *= sep / np.linalg.norm(centers, axis=1, keepdims=True)
    instances = []
    labels = []
    for c in range(n_classes):
        pts = centers[c] + rng.normal(size=(n_per_class, p))
        for i, x in enumerate(pts):
            instances.append(Instance(f"b{c}_{i}", x.reshape(p, 1)))
            labels.append(f"class{c}")
    return Dataset(VECTOR, CLASSIFICATION, instances, np.array(labels, dtype=object))


def make_series_classes(n_per_class, n_classes=3, channels=2, length=(20, 30),
                        noise=0.2, seed=0, equal_length=False):
    """Multichannel sine-wave classes with per-instance lengths in ``length``."""
    rng = np.random.default_rng(seed)
    lo, hi = length
    instances = []
    labels = []
    for c in range(n_classes):
        freq = 1.0 + 0.7 * c
        for i in range(n_per_class):
            t_n = lo if equal_length else int(rng.integers(lo, hi + 1))
            grid = np.linspace(0, 2 * np.pi, t_n)
            phase = rng.uniform(0, 0.5)
            vals = np.stack(
                [np.sin(freq * grid + phase + k) + noise * rng.normal(size=t_n)
                 for k in range(channels)]
            )
            instances.append(Instance(f"s{c}_{i}", vals))
            labels.append(f"class{c}")
    return Dataset(SERIES, CLASSIFICATION, instances, np.array(labels, dtype=object))


def make_series_regression(n, length=30, noise=0.05, seed=0):
    """Univariate series whose amplitude is the regression target."""
    rng = np.random.default_rng(seed)
    grid = np.linspace(0, 2 * np.pi, length)
    instances = []
    targets = []
    for i in range(n):
        amp = rng.uniform(0.5, 2.0)
        phase = rng.uniform(0, 0.3)
        vals = (amp * np.sin(grid + phase) + noise * rng.normal(size=length)).reshape(1, -1)
        instances.append(Instance(f"g{i}", vals))
        targets.append(amp)
    return Dataset(SERIES, REGRESSION, instances, np.array(targets, dtype=np.float64))


def make_graph_classes(n_per_class, seed=0, n_nodes=(8, 14)):
    """Two structural graph classes: random trees vs. denser random graphs."""
    rng = np.random.default_rng(seed)
    lo, hi = n_nodes
    instances = []
    labels = []
    for c in range(2):
        for i in range(n_per_class):
            nv = int(rng.integers(lo, hi + 1))
            edges = set()
            for v in range(1, nv):  # random spanning tree keeps graphs connected
                u = int(rng.integers(0, v))
                edges.add((u, v))
            if c == 1:
                extra = max(2, nv // 2)
                for _ in range(extra):
                    u, v = rng.integers(0, nv, size=2)
                    if u != v:
                        edges.add((min(u, v), max(u, v)))
            node_labels = tuple(str(int(l)) for l in rng.integers(0, 3, size=nv))
            instances.append(Instance(f"g{c}_{i}", graph=Graph(node_labels, tuple(sorted(edges)))))
            labels.append(f"class{c}")
    return Dataset(GRAPH, CLASSIFICATION, instances, np.array(labels, dtype=object))


def standardize(train, test=None):
    """Z-score vector datasets by the training mean/std (per feature)."""
    stack = np.stack([inst.values[:, 0] for inst in train.instances])
    mean = np.nanmean(stack, axis=0)
    std = np.nanstd(stack, axis=0)
    std[std == 0] = 1.0

    def apply(d):
        out = d.copy()
        for inst in out.instances:
            inst.values[:, 0] = (inst.values[:, 0] - mean) / std
        return out

    return apply(train) if test is None else (apply(train), apply(test))
