"""Geometry and UMa line-of-sight link budget.

All internal math is in linear SI units (W, Hz, m). dB/dBm conversions are
only provided for reporting.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ValidationError

SPEED_OF_LIGHT = 3.0e8


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        for name in ("x", "y", "z"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValidationError(f"Point3.{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def as_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "z": self.z}


@dataclass(frozen=True)
class Volume:
    """Axis-aligned box of admissible coordinates (meters)."""

    x_min: float = -1000.0
    x_max: float = 1000.0
    y_min: float = -1000.0
    y_max: float = 1000.0
    z_min: float = -1000.0
    z_max: float = 1000.0

    def __post_init__(self):
        for axis in "xyz":
            lo, hi = getattr(self, f"{axis}_min"), getattr(self, f"{axis}_max")
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValidationError(f"volume {axis} bounds must be finite")
            if not lo < hi:
                raise ValidationError(f"volume {axis}_min must be < {axis}_max ({lo} >= {hi})")

    def contains(self, p: Point3) -> bool:
        return (
            self.x_min <= p.x <= self.x_max
            and self.y_min <= p.y <= self.y_max
            and self.z_min <= p.z <= self.z_max
        )

    def as_dict(self) -> dict:
        return {
            "x_min": self.x_min, "x_max": self.x_max,
            "y_min": self.y_min, "y_max": self.y_max,
            "z_min": self.z_min, "z_max": self.z_max,
        }


class NoiseBandwidth(str, enum.Enum):
    RB_GRID = "rb_grid"
    EFFECTIVE_DATA = "effective_data"


@dataclass(frozen=True)
class ModelConfig:
    """Physical constants of the link model. Defaults follow a 5 GHz UMa cell."""

    carrier_frequency_ghz: float = 5.0
    tx_power_dbm: float = 24.0
    tx_gain_linear: float = 1.0
    rx_gain_linear: float = 1.0
    h_bs: float = 25.0
    h_ut: float = 1.5
    h_e: float = 1.0
    speed_of_light: float = SPEED_OF_LIGHT
    rb_count: int = 266
    data_subcarriers_per_rb: int = 9
    numerology: int = 0
    noise_psd_w_per_hz: float = 10 ** (-20.4)
    noise_bandwidth_mode: NoiseBandwidth = NoiseBandwidth.RB_GRID
    d2d_min: float = 10.0
    d2d_max: float = 5000.0

    def __post_init__(self):
        object.__setattr__(self, "noise_bandwidth_mode", NoiseBandwidth(self.noise_bandwidth_mode))
        positive = (
            "carrier_frequency_ghz", "tx_gain_linear", "rx_gain_linear", "speed_of_light",
            "rb_count", "data_subcarriers_per_rb", "noise_psd_w_per_hz",
        )
        for name in positive:
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValidationError(f"ModelConfig.{name} must be strictly positive, got {value!r}")
        if not math.isfinite(self.tx_power_dbm):
            raise ValidationError("ModelConfig.tx_power_dbm must be finite")
        if int(self.numerology) != self.numerology or self.numerology < 0:
            raise ValidationError(f"numerology must be a non-negative integer, got {self.numerology!r}")
        # a zero height gap is a legal limit case of the breakpoint formula
        if self.h_bs <= self.h_e:
            raise ValidationError("h_bs must exceed h_e")
        if self.h_ut < self.h_e:
            raise ValidationError("h_ut must not be below h_e")
        if not 0 <= self.d2d_min < self.d2d_max:
            raise ValidationError("need 0 <= d2d_min < d2d_max")

    @property
    def tx_power_w(self) -> float:
        return dbm_to_watts(self.tx_power_dbm)

    @property
    def subcarrier_spacing_hz(self) -> float:
        return subcarrier_spacing_hz(self.numerology)


def subcarrier_spacing_hz(mu: int) -> float:
    """SCS for numerology ``mu``: 2**mu * 15 kHz."""
    if int(mu) != mu or mu < 0:
        raise ValidationError(f"numerology must be a non-negative integer, got {mu!r}")
    return float(2 ** int(mu) * 15000)


def _scalar_or_array(out):
    return float(out) if np.ndim(out) == 0 else out


def watts_to_dbm(p):
    with np.errstate(divide="ignore"):
        return _scalar_or_array(10.0 * np.log10(np.asarray(p, dtype=float)) + 30.0)


def dbm_to_watts(p_dbm):
    return _scalar_or_array(10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0))


def lin_to_db(x):
    with np.errstate(divide="ignore"):
        return _scalar_or_array(10.0 * np.log10(np.asarray(x, dtype=float)))


def db_to_lin(x_db):
    return _scalar_or_array(10.0 ** (np.asarray(x_db, dtype=float) / 10.0))


def distance_2d(a: Point3, b: Point3) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)


def distance_3d(a: Point3, b: Point3) -> float:
    return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.z - b.z) ** 2)


def breakpoint_distance(cfg: ModelConfig) -> float:
    """UMa breakpoint distance 4 (h_BS - h_E)(h_UT - h_E) f / c, in meters."""
    f_hz = cfg.carrier_frequency_ghz * 1e9
    return 4.0 * (cfg.h_bs - cfg.h_e) * (cfg.h_ut - cfg.h_e) * f_hz / cfg.speed_of_light


def _pathloss_linear(d2d, d3d, cfg: ModelConfig):
    # no domain checks; callers mask or validate
    f2 = cfg.carrier_frequency_ghz ** 2
    d_bp = breakpoint_distance(cfg)
    d3d = np.asarray(d3d, dtype=float)
    pl1 = 10.0 ** 2.8 * d3d ** 2.2 * f2
    pl2 = 10.0 ** 2.8 * d3d ** 4 * f2 / (d_bp ** 2 + (cfg.h_bs - cfg.h_ut) ** 2) ** 0.9
    return np.where(np.asarray(d2d) <= d_bp, pl1, pl2)


def pathloss_uma_los(d2d, d3d, cfg: ModelConfig):
    """Linear UMa-LoS pathloss (>= 1) for 2D/3D distances in meters.

    Works elementwise on arrays. Raises DomainError if any d2d lies outside
    [cfg.d2d_min, cfg.d2d_max] or any d3d < d2d.
    """
    d2 = np.asarray(d2d, dtype=float)
    d3 = np.asarray(d3d, dtype=float)
    if np.any(~np.isfinite(d2)) or np.any(d2 < cfg.d2d_min) or np.any(d2 > cfg.d2d_max):
        raise DomainError(
            f"d2d outside [{cfg.d2d_min}, {cfg.d2d_max}] m: {d2d!r}; clamp or reject before calling"
        )
    if np.any(d3 < d2 * (1 - 1e-12)):
        raise DomainError("d3d must be >= d2d")
    return _scalar_or_array(_pathloss_linear(d2, d3, cfg))


def noise_bandwidth_hz(cfg: ModelConfig) -> float:
    bw = cfg.rb_count * cfg.subcarrier_spacing_hz
    if cfg.noise_bandwidth_mode is NoiseBandwidth.EFFECTIVE_DATA:
        bw *= cfg.data_subcarriers_per_rb
    return bw


def noise_power(cfg: ModelConfig) -> float:
    """Thermal noise power in watts over the configured noise bandwidth."""
    return cfg.noise_psd_w_per_hz * noise_bandwidth_hz(cfg)


def _rsrp_from_pathloss(pl, load_um, cfg: ModelConfig):
    return cfg.tx_power_w * cfg.tx_gain_linear * cfg.rx_gain_linear / (np.asarray(load_um) * pl)


def rsrp(ngmc_pos: Point3, ue_pos: Point3, load_um: int, cfg: ModelConfig) -> float:
    """Received power in watts for a UE sharing the cell with ``load_um - 1`` others."""
    if load_um < 1:
        raise ValidationError(f"load_um must be >= 1, got {load_um}")
    pl = pathloss_uma_los(distance_2d(ngmc_pos, ue_pos), distance_3d(ngmc_pos, ue_pos), cfg)
    return float(_rsrp_from_pathloss(pl, load_um, cfg))


def sinr_db(received, noise):
    """10 log10(received / noise). A zero received power maps to -inf."""
    if np.any(np.asarray(noise) <= 0):
        raise ValidationError("noise power must be positive")
    if np.any(np.asarray(received) < 0):
        raise ValidationError("received power must be non-negative")
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(np.asarray(received, dtype=float) / noise)
    return _scalar_or_array(out)
