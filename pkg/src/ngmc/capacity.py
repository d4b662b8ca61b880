"""Per-UE and aggregate downlink capacity."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import (
    ModelConfig,
    Point3,
    _pathloss_linear,
    _rsrp_from_pathloss,
    noise_power,
    subcarrier_spacing_hz,
)
from .errors import DomainError, ValidationError
from .link_adaptation import SeRegression, se_from_sinr
from .scenario import Scenario

__all__ = [
    "AssociationMatrix", "CapacityReport", "subcarrier_spacing_hz", "cell_load",
    "effective_bandwidth_hz", "bandwidth_share_hz", "ue_capacity", "aggregate_capacity",
]

REJECT = "reject"
CLAMP = "clamp"


class AssociationMatrix:
    """U x M binary user-to-cell association.

    Only binarity is enforced at construction; the one-cell-per-UE rule is
    reported by :meth:`row_violations` so that infeasible matrices can still
    be inspected.
    """

    def __init__(self, entries):
        a = np.array(entries, dtype=int)
        if a.ndim != 2:
            raise ValidationError("association matrix must be 2-D (U x M)")
        if a.size and not np.isin(a, (0, 1)).all():
            raise ValidationError("association matrix entries must be 0 or 1")
        a.setflags(write=False)
        self._a = a

    @classmethod
    def from_assignment(cls, serving: Sequence[int], n_cells: int) -> "AssociationMatrix":
        serving = np.asarray(serving, dtype=int)
        if serving.size and (serving.min() < 0 or serving.max() >= n_cells):
            raise ValidationError(f"serving cell index outside 0..{n_cells - 1}")
        a = np.zeros((serving.size, n_cells), dtype=int)
        a[np.arange(serving.size), serving] = 1
        return cls(a)

    @classmethod
    def single_cell(cls, n_ues: int) -> "AssociationMatrix":
        return cls(np.ones((n_ues, 1), dtype=int))

    @property
    def entries(self) -> np.ndarray:
        return self._a

    @property
    def n_ues(self) -> int:
        return self._a.shape[0]

    @property
    def n_cells(self) -> int:
        return self._a.shape[1]

    def row_violations(self) -> list:
        """Indices of UEs not associated with exactly one cell."""
        return [int(u) for u in np.flatnonzero(self._a.sum(axis=1) != 1)]

    def serving_cells(self) -> np.ndarray:
        if self.row_violations():
            raise ValidationError(f"UEs {self.row_violations()} are not associated with exactly one cell")
        return self._a.argmax(axis=1)

    def __eq__(self, other):
        return isinstance(other, AssociationMatrix) and np.array_equal(self._a, other._a)

    def __repr__(self):
        return f"AssociationMatrix({self._a.tolist()})"


@dataclass(frozen=True)
class CapacityReport:
    per_ue_capacity: tuple
    per_ue_sinr: tuple
    per_ue_se: tuple
    per_cell_load: tuple
    aggregate_capacity: float


def cell_load(assoc: AssociationMatrix, m: int) -> int:
    """Number of UEs associated with cell ``m``."""
    if not 0 <= m < assoc.n_cells:
        raise ValidationError(f"cell index {m} out of range 0..{assoc.n_cells - 1}")
    return int(assoc.entries[:, m].sum())


def effective_bandwidth_hz(cfg: ModelConfig) -> float:
    """Data bandwidth: RBs x data subcarriers per RB x SCS."""
    return cfg.rb_count * cfg.data_subcarriers_per_rb * cfg.subcarrier_spacing_hz


def _check_load(load_um) -> None:
    if load_um < 1:
        raise ValidationError(f"cell load must be >= 1, got {load_um}")


def bandwidth_share_hz(cfg: ModelConfig, load_um: int) -> float:
    _check_load(load_um)
    return effective_bandwidth_hz(cfg) / load_um


def ue_capacity(se: float, cfg: ModelConfig, load_um: int) -> float:
    """Capacity in bit/s of a UE with spectral efficiency ``se`` in a cell of ``load_um`` UEs."""
    _check_load(load_um)
    if se < 0:
        raise ValidationError(f"spectral efficiency must be >= 0, got {se}")
    return effective_bandwidth_hz(cfg) * se / load_um


def evaluate_batch(ue_xyz, cells, serving, cfg: ModelConfig, reg: SeRegression):
    """Vectorised capacity chain for P candidate placements.

    ue_xyz: (U, 3); cells: (P, M, 3); serving: (P, U) serving-cell indices.
    Returns a dict of (P, U) arrays ``sinr``, ``se``, ``capacity``, ``d2d``,
    ``violation`` plus ``loads`` of shape (P, M). Pairs whose d2d lies
    outside [d2d_min, d2d_max] are flagged in ``violation`` and evaluated at
    the nearest bound, so every array stays finite.
    """
    ue_xyz = np.asarray(ue_xyz, dtype=float)
    cells = np.asarray(cells, dtype=float)
    serving = np.asarray(serving, dtype=int)
    P, M, _ = cells.shape
    idx = np.broadcast_to(serving[:, :, None], serving.shape + (3,))
    srv = np.take_along_axis(cells, idx, axis=1)  # (P, U, 3)
    dx = srv[..., 0] - ue_xyz[None, :, 0]
    dy = srv[..., 1] - ue_xyz[None, :, 1]
    dz = srv[..., 2] - ue_xyz[None, :, 2]
    d2d = np.sqrt(dx * dx + dy * dy)
    violation = (d2d < cfg.d2d_min) | (d2d > cfg.d2d_max)
    d2e = np.clip(d2d, cfg.d2d_min, cfg.d2d_max)
    d3e = np.sqrt(d2e * d2e + dz * dz)
    loads = np.zeros((P, M), dtype=int)
    for m in range(M):
        loads[:, m] = (serving == m).sum(axis=1)
    ue_load = np.take_along_axis(loads, serving, axis=1)
    pl = _pathloss_linear(d2e, d3e, cfg)
    rx = _rsrp_from_pathloss(pl, ue_load, cfg)
    sinr = 10.0 * np.log10(rx / noise_power(cfg))
    se = se_from_sinr(reg, sinr)
    se = np.asarray(se, dtype=float).reshape(sinr.shape)
    capacity = effective_bandwidth_hz(cfg) * se / ue_load
    return {
        "sinr": sinr, "se": se, "capacity": capacity, "d2d": d2d,
        "violation": violation, "loads": loads,
    }


def aggregate_capacity(scenario: Scenario, positions: Sequence[Point3], assoc: AssociationMatrix,
                       cfg: ModelConfig, reg: SeRegression, policy: str = REJECT) -> CapacityReport:
    """Capacity of every UE at its serving cell and their sum.

    ``policy="reject"`` raises DomainError when a served UE-cell pair has a
    2D distance outside the pathloss range; ``"clamp"`` evaluates such pairs
    at the nearest admissible distance.
    """
    if policy not in (REJECT, CLAMP):
        raise ValidationError(f"unknown distance policy {policy!r}")
    positions = list(positions)
    if assoc.n_ues != len(scenario.ues) or assoc.n_cells != len(positions):
        raise ValidationError(
            f"association shape {assoc.entries.shape} does not match {len(scenario.ues)} UEs x {len(positions)} cells"
        )
    serving = assoc.serving_cells()
    cells = np.array([[p.x, p.y, p.z] for p in positions], dtype=float)[None]
    out = evaluate_batch(scenario.ue_array(), cells, serving[None], cfg, reg)
    if policy == REJECT and out["violation"].any():
        bad = [scenario.ues[u].id for u in np.flatnonzero(out["violation"][0])]
        raise DomainError(f"UEs {bad} are outside [{cfg.d2d_min}, {cfg.d2d_max}] m of their serving cell")
    per_ue = tuple(float(c) for c in out["capacity"][0])
    return CapacityReport(
        per_ue_capacity=per_ue,
        per_ue_sinr=tuple(float(s) for s in out["sinr"][0]),
        per_ue_se=tuple(float(s) for s in out["se"][0]),
        per_cell_load=tuple(int(n) for n in out["loads"][0]),
        aggregate_capacity=math.fsum(per_ue),
    )
