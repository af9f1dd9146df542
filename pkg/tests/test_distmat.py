import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_image_measure, random_measure
from uotbench.distmat import (
    DistanceMatrix,
    MetricKind,
    compute_pairwise,
    condensed_index,
    dataset_fingerprint,
    load_cache,
    metric_axiom_report,
    save_cache,
)
from uotbench.errors import CorruptCache, FingerprintMismatch
from uotbench.measures import GridMeasure
from uotbench.transport import HKParams


def diracs_at(points, mass=1.0):
    return [GridMeasure(np.array([p]), np.array([mass])) for p in points]


class TestCondensedIndexing:
    @given(st.integers(2, 60))
    @settings(max_examples=20, deadline=None)
    def test_bijection(self, n):
        seen = set()
        for i in range(n):
            for j in range(i + 1, n):
                k = condensed_index(i, j, n)
                assert 0 <= k < n * (n - 1) // 2
                seen.add(k)
        assert len(seen) == n * (n - 1) // 2

    def test_rejects_bad_pairs(self):
        with pytest.raises(ValueError):
            condensed_index(3, 3, 5)
        with pytest.raises(ValueError):
            condensed_index(2, 1, 5)


class TestComputePairwise:
    def test_identical_images_zero(self):
        img = np.random.default_rng(0).random((4, 4))
        vecs = np.vstack([img.ravel(), img.ravel()])
        m = compute_pairwise(vecs, MetricKind("euclidean"))
        assert m.values[0] == 0.0

        xs = (np.arange(4) + 0.5) / 4
        xx, yy = np.meshgrid(xs, xs)
        coords = np.stack([xx.ravel(), yy.ravel()], 1)
        meas = GridMeasure(coords, img.ravel() / img.sum())
        same = GridMeasure(coords.copy(), img.ravel() / img.sum())
        for kind in (MetricKind("ot"), MetricKind("uot", hk=HKParams(epsilon=1e-3))):
            m = compute_pairwise([meas, same], kind)
            assert m.values[0] <= 1e-6

    def test_three_diracs_ot(self):
        # equilateral-ish: all pairwise distances 0.2
        pts = np.array([[0.3, 0.3], [0.5, 0.3], [0.4, 0.3 + np.sqrt(0.04 - 0.01)]])
        m = compute_pairwise(diracs_at(pts), MetricKind("ot"))
        np.testing.assert_allclose(m.values, [0.2, 0.2, 0.2], atol=1e-9)

    def test_workers_bitwise_identical(self):
        rng = np.random.default_rng(21)
        measures = [random_measure(rng, 3, 8, mass=1.0) for _ in range(10)]
        kind = MetricKind("uot", hk=HKParams(epsilon=1e-2, tol=1e-7))
        m1 = compute_pairwise(measures, kind, workers=1)
        m4 = compute_pairwise(measures, kind, workers=4)
        assert np.array_equal(m1.values, m4.values)
        assert m1.fingerprint == m4.fingerprint

    def test_euclidean_matches_manual(self):
        rng = np.random.default_rng(2)
        X = rng.random((6, 10))
        m = compute_pairwise(X, MetricKind("euclidean"))
        for i in range(6):
            for j in range(i + 1, 6):
                expected = np.sqrt(((X[i] - X[j]) ** 2).sum())
                assert m.get(i, j) == pytest.approx(expected, rel=1e-12)

    def test_ot_requires_normalized(self):
        rng = np.random.default_rng(3)
        measures = [random_measure(rng, 3, 5, mass=2.0) for _ in range(3)]
        with pytest.raises(ValueError):
            compute_pairwise(measures, MetricKind("ot"))


class TestCache:
    def _matrix(self):
        rng = np.random.default_rng(4)
        measures = [random_measure(rng, 2, 5, mass=1.0) for _ in range(6)]
        return compute_pairwise(measures, MetricKind("ot")), measures

    def test_round_trip_bit_exact(self, tmp_path):
        m, _ = self._matrix()
        path = tmp_path / "ot.uotm"
        save_cache(m, path)
        loaded = load_cache(path, expected_fingerprint=m.fingerprint)
        assert loaded.n == m.n
        assert np.array_equal(loaded.values, m.values)
        assert loaded.fingerprint == m.fingerprint
        assert loaded.metric.kind == "ot"

    def test_truncated_rejected(self, tmp_path):
        m, _ = self._matrix()
        path = tmp_path / "ot.uotm"
        save_cache(m, path)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(CorruptCache):
            load_cache(path)

    def test_fingerprint_mismatch(self, tmp_path):
        m, measures = self._matrix()
        path = tmp_path / "ot.uotm"
        save_cache(m, path)
        other = dataset_fingerprint(measures, MetricKind("uot", hk=HKParams(epsilon=0.5)))
        with pytest.raises(FingerprintMismatch):
            load_cache(path, expected_fingerprint=other)

    def test_uot_params_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        measures = [random_measure(rng, 2, 4) for _ in range(4)]
        kind = MetricKind("uot", hk=HKParams(kappa=0.7, epsilon=5e-3, tol=1e-7))
        m = compute_pairwise(measures, kind)
        path = tmp_path / "uot.uotm"
        save_cache(m, path)
        loaded = load_cache(path)
        assert loaded.metric.kind == "uot"
        assert loaded.metric.hk.kappa == 0.7
        assert loaded.metric.hk.epsilon == 5e-3


class TestAxiomReport:
    def test_exact_w2_triangle_exhaustive(self):
        rng = np.random.default_rng(6)
        measures = [random_image_measure(rng, side=6, mass=1.0) for _ in range(12)]
        m = compute_pairwise(measures, MetricKind("ot"))
        report = metric_axiom_report(m)
        assert report.max_triangle_violation <= 1e-9
        assert report.max_asymmetry == 0.0
        assert report.min_value >= 0.0
        assert report.triples_checked == 12 * 11 * 10 // 6

    def test_all_zero_matrix(self):
        m = DistanceMatrix(4, MetricKind("euclidean"), np.zeros(6), bytes(32))
        report = metric_axiom_report(m)
        assert report.max_triangle_violation == 0.0

    def test_euclidean_triangle(self):
        rng = np.random.default_rng(7)
        X = rng.random((15, 8))
        m = compute_pairwise(X, MetricKind("euclidean"))
        report = metric_axiom_report(m)
        assert report.max_triangle_violation <= 1e-12

    def test_sampled_subset(self):
        rng = np.random.default_rng(8)
        X = rng.random((30, 4))
        m = compute_pairwise(X, MetricKind("euclidean"))
        report = metric_axiom_report(m, triple_samples=100, seed=3)
        assert report.triples_checked == 100
        assert report.max_triangle_violation <= 1e-12
