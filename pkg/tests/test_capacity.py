import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ngmc.capacity import (
    AssociationMatrix,
    aggregate_capacity,
    bandwidth_share_hz,
    cell_load,
    effective_bandwidth_hz,
    subcarrier_spacing_hz,
    ue_capacity,
)
from ngmc.channel import ModelConfig, Point3, Volume
from ngmc.errors import DomainError, ValidationError
from ngmc.link_adaptation import SeRegression
from ngmc.scenario import scenario_from_points

from oracles import chain_single_ue

CFG = ModelConfig()
REG = SeRegression()
CELL = Point3(0.0, 0.0, 25.0)
WIDE = Volume(-6000, 6000, -6000, 6000, -100, 100)


def single(points, cell=CELL, cfg=CFG, policy="reject"):
    sc = scenario_from_points(points, volume=WIDE)
    return aggregate_capacity(sc, [cell], AssociationMatrix.single_cell(len(points)), cfg, REG, policy)


class TestBandwidth:
    @pytest.mark.parametrize("mu,expected", [(0, 15000), (1, 30000), (2, 60000)])
    def test_scs(self, mu, expected):
        assert subcarrier_spacing_hz(mu) == expected

    def test_negative_mu(self):
        with pytest.raises(ValidationError):
            subcarrier_spacing_hz(-1)

    def test_effective_bandwidth(self):
        assert effective_bandwidth_hz(CFG) == 35_910_000
        assert effective_bandwidth_hz(ModelConfig(data_subcarriers_per_rb=12)) == 47_880_000
        assert effective_bandwidth_hz(ModelConfig(rb_count=1)) == 135_000

    @pytest.mark.parametrize("load,expected", [(1, 35.91e6), (2, 17.955e6), (5, 7.182e6)])
    def test_share(self, load, expected):
        assert bandwidth_share_hz(CFG, load) == pytest.approx(expected, rel=1e-12)

    def test_zero_load(self):
        with pytest.raises(ValidationError):
            bandwidth_share_hz(CFG, 0)
        with pytest.raises(ValidationError):
            ue_capacity(1.0, CFG, 0)


class TestUeCapacity:
    def test_at_cap(self):
        assert ue_capacity(6.4, CFG, 1) == pytest.approx(229.824e6, rel=1e-12)

    def test_zero_se(self):
        assert ue_capacity(0.0, CFG, 3) == 0

    def test_shared(self):
        assert ue_capacity(2.72, CFG, 2) == pytest.approx(48.84e6, abs=0.01e6)


class TestAssociation:
    def test_loads(self):
        assert cell_load(AssociationMatrix.single_cell(5), 0) == 5
        a = AssociationMatrix.from_assignment([0, 1, 0], 2)
        assert (cell_load(a, 0), cell_load(a, 1)) == (2, 1)
        assert cell_load(AssociationMatrix.from_assignment([0, 0], 2), 1) == 0

    def test_bad_index(self):
        with pytest.raises(ValidationError):
            cell_load(AssociationMatrix.single_cell(2), 1)

    def test_non_binary(self):
        with pytest.raises(ValidationError):
            AssociationMatrix([[2, 0]])

    def test_row_violations(self):
        a = AssociationMatrix([[1, 0], [0, 0], [1, 1]])
        assert a.row_violations() == [1, 2]
        with pytest.raises(ValidationError):
            a.serving_cells()


class TestAggregate:
    def test_single_ue_chain(self):
        rep = single([(1000.0, 0.0, 1.5)])
        sinr, se, cap = chain_single_ue(1000.0)
        assert rep.per_ue_sinr[0] == pytest.approx(22.25, abs=0.1)
        assert rep.per_ue_se[0] == pytest.approx(4.91, abs=0.03)
        assert rep.per_ue_capacity[0] == pytest.approx(176.3e6, abs=1.5e6)
        # independent dB-domain oracle, frozen
        assert (rep.per_ue_sinr[0], rep.per_ue_se[0]) == pytest.approx((sinr, se), rel=1e-9)
        assert rep.aggregate_capacity == pytest.approx(176_352_764.13, rel=1e-9)

    def test_symmetric_pair_is_exact(self):
        rep = single([(-400.0, 0.0, 1.5), (400.0, 0.0, 1.5)])
        assert rep.per_ue_capacity[0] == rep.per_ue_capacity[1]
        assert rep.per_cell_load == (2,)

    def test_floored_ue_contributes_zero(self):
        rep = single([(4999.0, 0.0, 1.5), (100.0, 0.0, 1.5)],
                     cfg=ModelConfig(tx_power_dbm=-20.0))
        assert rep.per_ue_se[0] == 0
        assert rep.per_ue_capacity[0] == 0
        assert rep.aggregate_capacity == rep.per_ue_capacity[1]

    def test_reject_and_clamp(self):
        with pytest.raises(DomainError, match="ue1"):
            single([(0.0, 0.0, 1.5)])
        rep = single([(0.0, 0.0, 1.5)], policy="clamp")
        assert rep.aggregate_capacity == pytest.approx(229.824e6)

    def test_shape_mismatch(self):
        sc = scenario_from_points([(100.0, 0.0, 1.5)])
        with pytest.raises(ValidationError):
            aggregate_capacity(sc, [CELL, CELL], AssociationMatrix.single_cell(1), CFG, REG)

    def test_two_cells(self):
        pts = [(-500.0, 0.0, 1.5), (500.0, 0.0, 1.5), (520.0, 0.0, 1.5)]
        sc = scenario_from_points(pts)
        a = AssociationMatrix.from_assignment([0, 1, 1], 2)
        rep = aggregate_capacity(sc, [Point3(-400, 0, 25), Point3(400, 0, 25)], a, CFG, REG)
        assert rep.per_cell_load == (1, 2)
        assert rep.per_ue_capacity[0] > rep.per_ue_capacity[1]


coord = st.floats(-900, 900)
ue_lists = st.lists(st.tuples(coord, coord), min_size=1, max_size=6).filter(
    lambda pts: all(math.hypot(x, y) >= 10 for x, y in pts)
)


class TestProperties:
    @given(ue_lists, st.randoms(use_true_random=False))
    def test_permutation_invariant(self, pts, rnd):
        pts3 = [(x, y, 1.5) for x, y in pts]
        shuffled = list(pts3)
        rnd.shuffle(shuffled)
        assert single(pts3).aggregate_capacity == single(shuffled).aggregate_capacity

    @given(ue_lists)
    def test_sum_and_bounds(self, pts):
        rep = single([(x, y, 1.5) for x, y in pts])
        assert rep.aggregate_capacity == pytest.approx(sum(rep.per_ue_capacity), rel=1e-12)
        bound = effective_bandwidth_hz(CFG) * 6.4 / len(pts)
        assert all(0 <= c <= bound * (1 + 1e-12) for c in rep.per_ue_capacity)

    @given(st.floats(10, 4000), st.floats(0.1, 900))
    def test_nonincreasing_in_distance(self, d, delta):
        a = single([(d, 0.0, 1.5)]).per_ue_capacity[0]
        b = single([(d + delta, 0.0, 1.5)]).per_ue_capacity[0]
        assert b <= a

    @given(st.floats(10, 4000), st.integers(1, 4))
    def test_doubling_load_decreases_capacity(self, d, n):
        # n co-located UEs vs 2n co-located UEs at the same distance
        a = single([(d, float(k) * 1e-6, 1.5) for k in range(n)])
        b = single([(d, float(k) * 1e-6, 1.5) for k in range(2 * n)])
        if a.per_ue_capacity[0] > 0:
            assert b.per_ue_capacity[0] < a.per_ue_capacity[0]
        else:
            assert b.per_ue_capacity[0] == 0

    def test_evaluate_batch_matches_scalar_chain(self):
        for d in np.geomspace(10, 5000, 30):
            sinr, se, cap = chain_single_ue(d)
            rep = single([(d, 0.0, 1.5)])
            assert rep.per_ue_sinr[0] == pytest.approx(sinr, abs=1e-9)
            assert rep.per_ue_capacity[0] == pytest.approx(cap, rel=1e-9, abs=1e-3)
