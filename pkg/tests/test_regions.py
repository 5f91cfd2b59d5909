"""
レート領域の同値性チェックのテスト
"""
from itertools import combinations

import pytest

from app.causal_ceo.errors import AxisError, ModelError
from app.causal_ceo.finite_bt import regions
from app.causal_ceo.finite_bt.pmf import random_toy


def _toy(rng, K, t=1):
    return random_toy(rng, t=t, K=K, reconstruction=False)


class TestRegionEquivalence:
    @pytest.mark.parametrize("K", [2, 3])
    def test_representations_agree(self, rng, K):
        report = regions.region_equivalence(_toy(rng, K), samples=200, seed=7)
        assert report.K == K
        assert report.agreements == report.samples - report.boundary_excluded
        assert len(report.corner_points) == (2 if K == 2 else 6)
        assert 0 <= report.in_region <= report.agreements

    def test_same_seed_same_report(self, rng):
        toy = _toy(rng, 2)
        first = regions.region_equivalence(toy, samples=50, seed=3)
        second = regions.region_equivalence(toy, samples=50, seed=3)
        assert first == second

    def test_needs_single_time_step(self, rng):
        with pytest.raises(AxisError):
            regions.region_equivalence(_toy(rng, 2, t=2), samples=10)

    def test_rejects_too_many_observers(self, rng):
        with pytest.raises(ModelError):
            regions.region_equivalence(_toy(rng, 5), samples=10)


class TestCornerPoints:
    @pytest.mark.parametrize("K", [1, 2, 3])
    def test_corner_sums_equal_full_subset(self, rng, K):
        toy = _toy(rng, K)
        f = regions.subset_function(toy)
        full = f[frozenset(range(1, K + 1))]
        for corner in regions.corner_points(toy):
            assert sum(corner) == pytest.approx(full, abs=1e-10)

    def test_corners_satisfy_every_subset_inequality(self, rng):
        toy = _toy(rng, 3)
        f = regions.subset_function(toy)
        for corner in regions.corner_points(toy):
            for size in (1, 2):
                for subset in combinations(range(1, 4), size):
                    assert sum(corner[k - 1] for k in subset) >= f[frozenset(subset)] - 1e-10

    def test_sum_rate_vertex_is_interior(self, rng):
        toy = _toy(rng, 2)
        point, m_subset, m_hull = regions.sum_rate_vertex(toy, margin=1e-3)
        assert len(point) == 2
        assert m_subset == pytest.approx(0.5e-3, abs=1e-9)
        assert m_hull >= 0.5e-3 - 1e-9


class TestMargins:
    def test_subset_margin(self):
        f = {frozenset({1}): 1.0, frozenset({2}): 1.0, frozenset({1, 2}): 1.5}
        assert regions.subset_margin([1.0, 1.0], f) == pytest.approx(0.0)
        assert regions.subset_margin([2.0, 2.0], f) == pytest.approx(1.0)
        assert regions.subset_margin([0.5, 3.0], f) == pytest.approx(-0.5)

    def test_hull_margin(self):
        corners = [[1.0, 0.5], [0.5, 1.0]]
        # 中点 (0.75, 0.75) が最も有利
        assert regions.hull_margin([2.0, 2.0], corners) == pytest.approx(1.25, abs=1e-9)
        assert regions.hull_margin([0.5, 0.5], corners) == pytest.approx(-0.25, abs=1e-9)
