import math

import pytest
from hypothesis import given, strategies as st

from ngmc.baseline import GainReport, compare, geo_mean_position, max_pairwise_distance
from ngmc.capacity import CapacityReport
from ngmc.errors import ValidationError
from ngmc.scenario import Scenario, SimSummary, scenario_from_points


def cap_report(total):
    return CapacityReport((total,), (20.0,), (4.0,), (1,), total)


class TestGeoMean:
    def test_pair(self):
        gm = geo_mean_position(scenario_from_points([(100, 0, 1.5), (900, 0, 1.5)]))
        assert (gm.x, gm.y, gm.z) == (500, 0, 25)

    def test_single(self):
        gm = geo_mean_position(scenario_from_points([(12.5, -7, 1.5)]))
        assert (gm.x, gm.y, gm.z) == (12.5, -7, 25)

    def test_square(self):
        a = 300.0
        gm = geo_mean_position(scenario_from_points([(a, a, 1.5), (-a, a, 1.5), (a, -a, 1.5), (-a, -a, 1.5)]))
        assert (gm.x, gm.y) == (0, 0)

    def test_empty(self):
        with pytest.raises(ValidationError):
            geo_mean_position(Scenario(()))

    @given(st.lists(st.tuples(st.floats(-400, 400), st.floats(-400, 400)), min_size=1, max_size=8),
           st.floats(-500, 500), st.floats(-500, 500))
    def test_translation_equivariant(self, pts, dx, dy):
        a = geo_mean_position(scenario_from_points([(x, y, 1.5) for x, y in pts]))
        b = geo_mean_position(scenario_from_points([(x + dx, y + dy, 1.5) for x, y in pts]))
        assert b.x == pytest.approx(a.x + dx, abs=1e-9)
        assert b.y == pytest.approx(a.y + dy, abs=1e-9)


class TestDiameter:
    def test_pair(self):
        assert max_pairwise_distance(scenario_from_points([(0, 0, 1.5), (1000, 0, 1.5)])) == 1000

    def test_equilateral(self):
        s = 300.0
        pts = [(0, 0, 1.5), (s, 0, 1.5), (s / 2, s * math.sqrt(3) / 2, 1.5)]
        assert max_pairwise_distance(scenario_from_points(pts)) == pytest.approx(s, rel=1e-12)

    def test_collinear(self):
        pts = [(-500, 0, 1.5), (-200, 0, 1.5), (500, 0, 1.5)]
        assert max_pairwise_distance(scenario_from_points(pts)) == 1000

    def test_needs_two(self):
        with pytest.raises(ValidationError):
            max_pairwise_distance(scenario_from_points([(0, 0, 1.5)]))

    @given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=2, max_size=6, unique=True),
           st.floats(0.1, 9), st.randoms(use_true_random=False))
    def test_permutation_and_scale(self, pts, k, rnd):
        base = max_pairwise_distance(scenario_from_points([(x, y, 1.5) for x, y in pts]))
        shuffled = list(pts)
        rnd.shuffle(shuffled)
        assert max_pairwise_distance(scenario_from_points([(x, y, 1.5) for x, y in shuffled])) == base
        scaled = max_pairwise_distance(scenario_from_points([(k * x, k * y, 1.5) for x, y in pts]))
        assert scaled == pytest.approx(k * base, rel=1e-9, abs=1e-9)


class TestCompare:
    def test_identity(self):
        assert compare(cap_report(1e8), cap_report(1e8)).capacity_gain_pct == 0

    def test_capacity_gain(self):
        assert compare(cap_report(2.87e8), cap_report(1e8)).capacity_gain_pct == pytest.approx(187)

    def test_delay_reduction(self):
        g = compare(SimSummary((1e8,), 7.4e-3), SimSummary((1e8,), 10e-3))
        assert g.delay_reduction_pct == pytest.approx(26)
        assert g.throughput_gain_pct == 0

    def test_zero_baseline_is_undefined(self):
        g = compare(cap_report(1e8), cap_report(0.0))
        assert g.capacity_gain_pct is None

    def test_kind_mismatch(self):
        with pytest.raises(ValidationError):
            compare(cap_report(1e8), SimSummary((1e8,), 1e-3))

    def test_diameter_recorded(self):
        assert compare(cap_report(1.0), cap_report(1.0), diameter=800.0) == GainReport(0.0, None, None, 800.0)

    @given(st.floats(1, 1e9), st.floats(1e-4, 1))
    def test_self_comparison_zero(self, thr, delay):
        s = SimSummary((thr,), delay)
        g = compare(s, s)
        assert g.throughput_gain_pct == 0 and g.delay_reduction_pct == 0
