"""Geo-mean baseline, scenario diameter and gain comparison."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

from .capacity import CapacityReport
from .channel import Point3
from .errors import ValidationError
from .scenario import Scenario


@dataclass(frozen=True)
class GainReport:
    """Percent gains of an obtained placement over a baseline.

    A gain is None when the baseline value is zero or the metric is absent.
    """

    capacity_gain_pct: Optional[float] = None
    throughput_gain_pct: Optional[float] = None
    delay_reduction_pct: Optional[float] = None
    diameter: Optional[float] = None


def geo_mean_position(scenario: Scenario, z: float = 25.0) -> Point3:
    if not scenario.ues:
        raise ValidationError("geo-mean of an empty scenario is undefined")
    n = len(scenario.ues)
    return Point3(math.fsum(u.position.x for u in scenario.ues) / n,
                  math.fsum(u.position.y for u in scenario.ues) / n, z)


def max_pairwise_distance(scenario: Scenario) -> float:
    """Largest 2D distance between any two UEs."""
    if len(scenario.ues) < 2:
        raise ValidationError("diameter needs at least 2 UEs")
    return max(
        math.hypot(a.position.x - b.position.x, a.position.y - b.position.y)
        for a, b in itertools.combinations(scenario.ues, 2)
    )


def pct_gain(obtained: Optional[float], baseline: Optional[float]) -> Optional[float]:
    if obtained is None or baseline is None or baseline == 0:
        return None
    return 100.0 * (obtained - baseline) / baseline


def pct_reduction(obtained: Optional[float], baseline: Optional[float]) -> Optional[float]:
    if obtained is None or baseline is None or baseline == 0:
        return None
    return 100.0 * (baseline - obtained) / baseline


def compare(obtained, baseline, diameter: Optional[float] = None) -> GainReport:
    """Gains of ``obtained`` over ``baseline``.

    Both must be CapacityReports, or both SimReport/SimSummary-like objects
    exposing ``aggregate_throughput_bps`` and ``mean_delay_s``.
    """
    if type(obtained) is not type(baseline):
        raise ValidationError(
            f"cannot compare {type(obtained).__name__} with {type(baseline).__name__}"
        )
    if diameter is not None and diameter < 0:
        raise ValidationError("diameter must be >= 0")
    if isinstance(obtained, CapacityReport):
        return GainReport(capacity_gain_pct=pct_gain(obtained.aggregate_capacity, baseline.aggregate_capacity),
                          diameter=diameter)
    return GainReport(
        throughput_gain_pct=pct_gain(obtained.aggregate_throughput_bps, baseline.aggregate_throughput_bps),
        delay_reduction_pct=pct_reduction(obtained.mean_delay_s, baseline.mean_delay_s),
        diameter=diameter,
    )
