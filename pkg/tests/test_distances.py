import math

import numpy as np
import pytest

import oracles
from proxforest.data import Graph, Instance
from proxforest.distances import (
    NO_OVERLAP_SENTINEL,
    DistanceMeasure,
    DistanceResolutionError,
    DistanceSpec,
    register_measure,
    registry_resolve,
    wl_histograms,
)


def vec(*vals, uid="x"):
    return Instance(uid, np.array(vals, dtype=float).reshape(-1, 1))


def ser(channels, uid="x"):
    return Instance(uid, np.array(channels, dtype=float))


def graph(nodes, edges, uid="g"):
    return Instance(uid, graph=Graph(tuple(nodes), tuple(sorted(tuple(e) for e in edges))))


class TestEuclidean:
    def test_known_value(self):
        d = registry_resolve(DistanceSpec("euclidean"))
        assert d(vec(0, 0), vec(3, 4)) == 5.0

    def test_identity_zero(self):
        d = registry_resolve(DistanceSpec("euclidean"))
        assert d(vec(1, 2, 3), vec(1, 2, 3)) == 0.0

    def test_skip_policy_ignores_missing(self):
        d = registry_resolve(DistanceSpec("euclidean"))
        assert d(vec(1, np.nan, 3), vec(1, 5, 7)) == 4.0

    def test_no_overlap_sentinel(self):
        d = registry_resolve(DistanceSpec("euclidean"))
        assert d(vec(np.nan, 2), vec(1, np.nan)) == NO_OVERLAP_SENTINEL
        assert math.isinf(NO_OVERLAP_SENTINEL)

    def test_error_policy(self):
        d = registry_resolve(DistanceSpec("euclidean", {"missing_policy": "error"}))
        with pytest.raises(ValueError, match="missing values"):
            d(vec(1, np.nan), vec(1, 2))

    def test_rescale(self):
        d = registry_resolve(DistanceSpec("euclidean", {"rescale": True}))
        # one of two coordinates overlaps: squared distance scaled by 2/1
        assert d(vec(1, np.nan), vec(4, 5)) == pytest.approx(math.sqrt(9 * 2))

    def test_dimension_mismatch(self):
        d = registry_resolve(DistanceSpec("euclidean"))
        with pytest.raises(ValueError, match="mismatch"):
            d(vec(1, 2), vec(1, 2, 3))

    def test_bad_policy(self):
        with pytest.raises(DistanceResolutionError):
            registry_resolve(DistanceSpec("euclidean", {"missing_policy": "zeros"}))


class TestCosine:
    def test_orthogonal(self):
        d = registry_resolve(DistanceSpec("cosine"))
        assert d(vec(1, 0), vec(0, 1)) == pytest.approx(1.0)

    def test_parallel_zero(self):
        d = registry_resolve(DistanceSpec("cosine"))
        assert d(vec(2, 2), vec(5, 5)) == pytest.approx(0.0)

    def test_opposite_two(self):
        d = registry_resolve(DistanceSpec("cosine"))
        assert d(vec(1, 1), vec(-1, -1)) == pytest.approx(2.0)

    def test_zero_norm_rejected(self):
        d = registry_resolve(DistanceSpec("cosine"))
        with pytest.raises(ValueError, match="zero-norm"):
            d(vec(0, 0), vec(1, 1))

    def test_missing_rejected(self):
        d = registry_resolve(DistanceSpec("cosine"))
        with pytest.raises(ValueError, match="complete"):
            d(vec(1, np.nan), vec(1, 2))


class TestDtw:
    def test_identical_zero(self):
        d = registry_resolve(DistanceSpec("dtw_d"))
        s = ser([[1, 2, 3], [4, 5, 6]])
        assert d(s, ser([[1, 2, 3], [4, 5, 6]])) == 0.0

    def test_matches_full_dp_oracle(self, rng):
        d = registry_resolve(DistanceSpec("dtw_d"))
        for _ in range(200):
            p = int(rng.integers(1, 4))
            a = ser(rng.normal(size=(p, int(rng.integers(2, 12)))))
            b = ser(rng.normal(size=(p, int(rng.integers(2, 12)))))
            assert d(a, b) == pytest.approx(oracles.dtw_full(a.values, b.values), rel=1e-12)

    def test_band_matches_banded_oracle(self, rng):
        for w in (0, 1, 2, 3):
            d = registry_resolve(DistanceSpec("dtw_d", {"w": w}))
            for _ in range(50):
                a = ser(rng.normal(size=(1, int(rng.integers(2, 10)))))
                b = ser(rng.normal(size=(1, int(rng.integers(2, 10)))))
                assert d(a, b) == pytest.approx(
                    oracles.dtw_banded(a.values, b.values, w), rel=1e-12)

    def test_band_zero_equal_length_is_pointwise(self):
        d = registry_resolve(DistanceSpec("dtw_d", {"w": 0}))
        a = ser([[1.0, 2.0, 4.0]])
        b = ser([[1.5, 3.0, 3.0]])
        assert d(a, b) == pytest.approx(0.25 + 1.0 + 1.0)

    def test_independent_is_per_channel_sum(self, rng):
        dd = registry_resolve(DistanceSpec("dtw_d"))
        di = registry_resolve(DistanceSpec("dtw_i"))
        a = ser(rng.normal(size=(3, 8)))
        b = ser(rng.normal(size=(3, 10)))
        expected = sum(
            dd(ser(a.values[k:k + 1]), ser(b.values[k:k + 1])) for k in range(3)
        )
        assert di(a, b) == pytest.approx(expected, rel=1e-12)

    def test_independent_single_channel_equals_dependent(self, rng):
        dd = registry_resolve(DistanceSpec("dtw_d"))
        di = registry_resolve(DistanceSpec("dtw_i"))
        a = ser(rng.normal(size=(1, 9)))
        b = ser(rng.normal(size=(1, 7)))
        assert di(a, b) == pytest.approx(dd(a, b), rel=1e-12)

    def test_missing_rejected_with_guidance(self):
        d = registry_resolve(DistanceSpec("dtw_d"))
        with pytest.raises(ValueError, match="initialize missing values first"):
            d(ser([[1, np.nan]]), ser([[1, 2]]))

    def test_channel_mismatch(self):
        d = registry_resolve(DistanceSpec("dtw_d"))
        with pytest.raises(ValueError, match="channel count"):
            d(ser([[1, 2]]), ser([[1, 2], [3, 4]]))

    def test_triangle_inequality_violated(self):
        # frozen witness: squared-cost DTW is not a metric
        a = ser([[0.0, 0.0]])
        b = ser([[1.0, 1.0]])
        c = ser([[2.0, 2.0]])
        d = registry_resolve(DistanceSpec("dtw_d"))
        assert d(a, c) == 8.0
        assert d(a, b) + d(b, c) == 4.0
        assert d(a, c) > d(a, b) + d(b, c)

    def test_bad_window(self):
        with pytest.raises(DistanceResolutionError):
            registry_resolve(DistanceSpec("dtw_d", {"w": -2}))


class TestWl:
    def test_identical_zero(self):
        d = registry_resolve(DistanceSpec("wl", {"h": 2}))
        g = graph(["A", "B"], [(0, 1)])
        g2 = graph(["A", "B"], [(0, 1)])
        assert d(g, g2) == 0.0

    def test_hand_computed_path_vs_singleton(self):
        # G1: A-B path; G2: lone A. h=1.
        # round 0 histograms differ by the B count            -> L1 = 1
        # round 1: all three refined labels distinct          -> L1 = 3
        # total 4, normalized by (2+1)*(1+1) = 6
        d = registry_resolve(DistanceSpec("wl", {"h": 1}))
        assert d(graph(["A", "B"], [(0, 1)]), graph(["A"], [])) == pytest.approx(4 / 6)

    def test_isolated_extra_node_h0(self):
        # adding one isolated node with an unseen label at h=0: the histograms
        # differ in exactly one count, so the distance is 1/(V1+V2)
        g1 = graph(["A", "A"], [(0, 1)])
        g2 = graph(["A", "A", "Z"], [(0, 1)])
        d = registry_resolve(DistanceSpec("wl", {"h": 0}))
        assert d(g1, g2) == pytest.approx(1 / 5)

    def test_matches_oracle(self, rng):
        for h in (0, 1, 2, 3):
            d = registry_resolve(DistanceSpec("wl", {"h": h}))
            for _ in range(50):
                gs = []
                for _ in range(2):
                    nv = int(rng.integers(2, 8))
                    edges = {
                        (min(u, v), max(u, v))
                        for u, v in rng.integers(0, nv, size=(nv, 2))
                        if u != v
                    }
                    gs.append(graph([str(int(l)) for l in rng.integers(0, 3, size=nv)], edges))
                a, b = gs
                assert d(a, b) == pytest.approx(
                    oracles.wl_distance(a.graph, b.graph, h), rel=1e-12)

    def test_refinement_rounds_count(self):
        g = graph(["A", "B", "A"], [(0, 1), (1, 2)])
        assert len(wl_histograms(g.graph, 3)) == 4

    def test_bad_depth(self):
        with pytest.raises(DistanceResolutionError):
            registry_resolve(DistanceSpec("wl", {"h": -1}))


class TestRegistry:
    def test_unknown_name(self):
        with pytest.raises(DistanceResolutionError, match="unknown distance"):
            registry_resolve(DistanceSpec("manhattan"))

    def test_plugin_roundtrip(self):
        def builder(params):
            scale = float(params.get("scale", 1.0))
            return DistanceMeasure(
                "test_scaled_l1", ("vector",),
                lambda a, b: scale * float(np.nansum(np.abs(a.values - b.values))),
            )

        register_measure("test_scaled_l1", builder)
        try:
            d = registry_resolve(DistanceSpec("test_scaled_l1", {"scale": 2.0}))
            assert d(vec(1, 1), vec(2, 3)) == 6.0
        finally:
            from proxforest.distances import _REGISTRY
            del _REGISTRY["test_scaled_l1"]

    def test_builtin_overwrite_refused(self):
        with pytest.raises(ValueError, match="already registered"):
            register_measure("euclidean", lambda params: None)

    def test_spec_label_hides_tables(self):
        spec = DistanceSpec("meta_class", {"predictions": object()})
        assert "predictions" not in spec.label()
        assert DistanceSpec("dtw_d", {"w": 3}).label() == "dtw_d({'w': 3})"
