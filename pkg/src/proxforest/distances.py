"""Distance registry with a uniform contract over vectors, series, and graphs.

Every measure is symmetric, nonnegative, and zero on identical payloads.  The
triangle inequality is deliberately NOT part of the contract (DTW and cosine
both violate it), which is exactly why the forest routes by exemplars instead
of relying on metric-tree pruning.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import meta as _meta
from .data import GRAPH, SERIES, VECTOR

#: ordered above every finite distance, never used in arithmetic
NO_OVERLAP_SENTINEL = math.inf


class DistanceResolutionError(KeyError):
    """Unknown distance name or invalid parameters."""


@dataclass
class DistanceSpec:
    """A named, parameterized distance selection."""

    name: str
    params: dict = field(default_factory=dict)

    def label(self):
        shown = {k: v for k, v in self.params.items() if k != "predictions"}
        return self.name if not shown else f"{self.name}({shown})"


class DistanceMeasure:
    """A resolved measure: callable on two Instances, with bound parameters."""

    def __init__(self, name, kinds, func):
        self.name = name
        self.kinds = kinds
        self._func = func

    def __call__(self, a, b):
        return self._func(a, b)


def _flat(inst):
    return inst.values.ravel()


def _build_euclidean(params):
    policy = params.get("missing_policy", "skip")
    rescale = bool(params.get("rescale", False))
    if policy not in ("skip", "error"):
        raise DistanceResolutionError(f"missing_policy must be skip|error, got {policy!r}")

    def d(a, b):
        x, y = _flat(a), _flat(b)
        if x.shape != y.shape:
            raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
        ok = ~(np.isnan(x) | np.isnan(y))
        if policy == "error" and not ok.all():
            raise ValueError(f"missing values present ({a.uid!r}, {b.uid!r}) under policy=error")
        n_ok = int(ok.sum())
        if n_ok == 0:
            return NO_OVERLAP_SENTINEL
        diff = x[ok] - y[ok]
        s = float(diff @ diff)
        if rescale:
            s *= x.size / n_ok
        return math.sqrt(s)

    return DistanceMeasure("euclidean", (VECTOR, SERIES), d)


def _build_cosine(params):
    def d(a, b):
        x, y = _flat(a), _flat(b)
        if x.shape != y.shape:
            raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
        if np.isnan(x).any() or np.isnan(y).any():
            raise ValueError("cosine distance requires complete payloads")
        if np.array_equal(x, y):
            return 0.0  # identity must be exact, not 1 - x@x/|x|^2 float noise
        nx, ny = float(np.linalg.norm(x)), float(np.linalg.norm(y))
        if nx == 0.0 or ny == 0.0:
            raise ValueError("cosine distance undefined for zero-norm input")
        return float(np.clip(1.0 - float(x @ y) / (nx * ny), 0.0, 2.0))

    return DistanceMeasure("cosine", (VECTOR,), d)


@njit(cache=True, nogil=True)
def _dtw_core(x, y, band):
    """Banded DTW over a (p, Tx) vs (p, Ty) grid, squared-Euclidean cell cost."""
    tx, ty = x.shape[1], y.shape[1]
    w = band
    if w < 0:
        w = tx + ty  # unbounded
    if w < abs(tx - ty):
        w = abs(tx - ty)  # keep the corner reachable
    prev = np.full(ty + 1, np.inf)
    cur = np.full(ty + 1, np.inf)
    prev[0] = 0.0
    for i in range(1, tx + 1):
        for j in range(ty + 1):
            cur[j] = np.inf
        jlo = i - w if i - w > 1 else 1
        jhi = i + w if i + w < ty else ty
        for j in range(jlo, jhi + 1):
            c = 0.0
            for k in range(x.shape[0]):
                dv = x[k, i - 1] - y[k, j - 1]
                c += dv * dv
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = c + best
        tmp = prev
        prev = cur
        cur = tmp
    return prev[ty]


def _check_series_pair(a, b):
    if a.values.shape[0] != b.values.shape[0]:
        raise ValueError(
            f"channel count mismatch: {a.values.shape[0]} vs {b.values.shape[0]}"
        )
    if a.values.shape[1] == 0 or b.values.shape[1] == 0:
        raise ValueError("DTW undefined on empty series")
    if np.isnan(a.values).any() or np.isnan(b.values).any():
        raise ValueError("DTW requires complete series (initialize missing values first)")


def _band_param(params):
    w = params.get("w", None)
    if w is None or w == "unbounded":
        return -1
    w = int(w)
    if w < 0:
        raise DistanceResolutionError(f"window w must be >= 0, got {w}")
    return w


def _build_dtw_dependent(params):
    band = _band_param(params)

    def d(a, b):
        _check_series_pair(a, b)
        return float(_dtw_core(np.ascontiguousarray(a.values), np.ascontiguousarray(b.values), band))

    return DistanceMeasure("dtw_d", (SERIES, VECTOR), d)


def _build_dtw_independent(params):
    band = _band_param(params)

    def d(a, b):
        _check_series_pair(a, b)
        total = 0.0
        for k in range(a.values.shape[0]):
            total += float(
                _dtw_core(
                    np.ascontiguousarray(a.values[k : k + 1]),
                    np.ascontiguousarray(b.values[k : k + 1]),
                    band,
                )
            )
        return total

    return DistanceMeasure("dtw_i", (SERIES, VECTOR), d)


def wl_histograms(graph, h):
    """Per-round label histograms of h rounds of WL refinement.

    Labels are canonicalized per round so histograms from different graphs are
    comparable; the refinement itself is order-independent because neighbor
    multisets are sorted.
    """
    labels = [repr(l) for l in graph.node_labels]
    neighbors = [[] for _ in range(graph.n_nodes)]
    for u, v in graph.edges:
        neighbors[u].append(v)
        neighbors[v].append(u)
    rounds = [Counter(labels)]
    for _ in range(h):
        labels = [
            labels[i] + "|" + ",".join(sorted(labels[j] for j in neighbors[i]))
            for i in range(graph.n_nodes)
        ]
        rounds.append(Counter(labels))
    return rounds


def _build_wl(params):
    h = int(params.get("h", 2))
    if h < 0:
        raise DistanceResolutionError(f"WL depth h must be >= 0, got {h}")

    def d(a, b):
        ha = wl_histograms(a.graph, h)
        hb = wl_histograms(b.graph, h)
        l1 = 0.0
        for ca, cb in zip(ha, hb):
            for key in set(ca) | set(cb):
                l1 += abs(ca.get(key, 0) - cb.get(key, 0))
        return l1 / ((a.graph.n_nodes + b.graph.n_nodes) * (h + 1))

    return DistanceMeasure("wl", (GRAPH,), d)


def _table_param(params):
    table = params.get("predictions")
    if table is None:
        raise DistanceResolutionError("meta distances require a 'predictions' table param")
    return table


def _build_meta_class(params):
    table = _table_param(params)
    if table.form != _meta.LABEL_FORM:
        raise DistanceResolutionError("meta_class requires a label-form prediction table")
    return DistanceMeasure(
        "meta_class",
        (VECTOR, SERIES, GRAPH),
        lambda a, b: _meta.meta_class_distance(a, b, table),
    )


def _build_meta_prob(params):
    table = _table_param(params)
    if table.form != _meta.PROB_FORM:
        raise DistanceResolutionError("meta_prob requires a probability-form prediction table")
    return DistanceMeasure(
        "meta_prob",
        (VECTOR, SERIES, GRAPH),
        lambda a, b: _meta.meta_prob_distance(a, b, table),
    )


_REGISTRY = {
    "euclidean": _build_euclidean,
    "cosine": _build_cosine,
    "dtw_d": _build_dtw_dependent,
    "dtw_i": _build_dtw_independent,
    "wl": _build_wl,
    "meta_class": _build_meta_class,
    "meta_prob": _build_meta_prob,
}


def register_measure(name, builder):
    """Plugin hook: register a builder(params) -> DistanceMeasure at startup.

    See docs/distance-plugins.md.  Re-registering a built-in name is refused.
    """
    if name in _REGISTRY:
        raise ValueError(f"distance name {name!r} is already registered")
    _REGISTRY[name] = builder


def registered_names():
    return sorted(_REGISTRY)


def registry_resolve(spec):
    """Resolve a DistanceSpec into a bound, callable measure."""
    try:
        builder = _REGISTRY[spec.name]
    except KeyError:
        raise DistanceResolutionError(
            f"unknown distance {spec.name!r}; registered: {', '.join(registered_names())}"
        )
    return builder(spec.params)
