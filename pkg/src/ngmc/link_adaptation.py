"""SE-vs-SINR abstraction: regression line, floor/cap, and MCS ladder."""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import FormatError, SchemaVersionError, ValidationError

MCS_TABLE_SCHEMA = "ngmc.mcs_table"
MCS_TABLE_VERSION = 1
MCS_COUNT = 28

DEFAULT_SLOPE = 0.23
DEFAULT_INTERCEPT = -0.21
DEFAULT_SE_CAP = 6.4


@dataclass(frozen=True)
class McsEntry:
    mcs_index: int
    sinr_min_db: float
    sinr_max_db: float
    spectral_efficiency: float

    def __post_init__(self):
        if not 0 <= self.mcs_index < MCS_COUNT:
            raise ValidationError(f"mcs_index {self.mcs_index} outside 0..{MCS_COUNT - 1}")
        if not self.sinr_min_db < self.sinr_max_db:
            raise ValidationError(f"MCS {self.mcs_index}: sinr_min_db must be < sinr_max_db")
        if not self.spectral_efficiency > 0:
            raise ValidationError(f"MCS {self.mcs_index}: spectral_efficiency must be > 0")


@dataclass(frozen=True)
class SeRegression:
    slope: float = DEFAULT_SLOPE
    intercept: float = DEFAULT_INTERCEPT
    se_cap: float = DEFAULT_SE_CAP

    def __post_init__(self):
        if not self.slope > 0:
            raise ValidationError(f"regression slope must be > 0, got {self.slope}")
        if not self.se_cap > 0:
            raise ValidationError(f"se_cap must be > 0, got {self.se_cap}")


class McsTable:
    """Immutable 28-rung ladder of non-overlapping, ascending SINR intervals."""

    def __init__(self, entries: Iterable[McsEntry], source: str = ""):
        entries = tuple(entries)
        if len(entries) != MCS_COUNT:
            raise ValidationError(f"an MCS table needs exactly {MCS_COUNT} entries, got {len(entries)}")
        for k, e in enumerate(entries):
            if e.mcs_index != k:
                raise ValidationError(f"entry {k} has mcs_index {e.mcs_index}; entries must be ordered 0..27")
        for prev, cur in zip(entries, entries[1:]):
            if cur.sinr_min_db < prev.sinr_max_db:
                raise ValidationError(f"SINR intervals of MCS {prev.mcs_index} and {cur.mcs_index} overlap")
            if not cur.spectral_efficiency > prev.spectral_efficiency:
                raise ValidationError(f"spectral efficiency must increase at MCS {cur.mcs_index}")
        self._entries = entries
        self._mins = [e.sinr_min_db for e in entries]
        self.source = source

    @property
    def entries(self) -> tuple:
        return self._entries

    def __len__(self):
        return len(self._entries)

    def __getitem__(self, k) -> McsEntry:
        return self._entries[k]

    def __eq__(self, other):
        return isinstance(other, McsTable) and self._entries == other._entries

    def __repr__(self):
        return f"McsTable({len(self)} entries, source={self.source!r})"

    def midpoints_db(self) -> np.ndarray:
        return np.array([interval_midpoint_db(e.sinr_min_db, e.sinr_max_db) for e in self._entries])

    def spectral_efficiencies(self) -> np.ndarray:
        return np.array([e.spectral_efficiency for e in self._entries])

    def dominated_by(self, reg: SeRegression) -> bool:
        """True if no entry's SE exceeds the regression line at its lower SINR bound.

        Under this condition quantized throughput can never exceed the line.
        """
        return all(
            min(e.spectral_efficiency, reg.se_cap) <= se_from_sinr(reg, e.sinr_min_db)
            for e in self._entries
        )

    def lookup(self, sinr: float) -> Optional[McsEntry]:
        # highest entry whose (inclusive) lower bound is <= sinr
        k = bisect.bisect_right(self._mins, sinr) - 1
        return self._entries[k] if k >= 0 else None

    # -- persistence --------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "schema": MCS_TABLE_SCHEMA,
            "version": MCS_TABLE_VERSION,
            "source": self.source,
            "entries": [
                {
                    "index": e.mcs_index,
                    "sinr_min_db": e.sinr_min_db,
                    "sinr_max_db": e.sinr_max_db,
                    "spectral_efficiency": e.spectral_efficiency,
                }
                for e in self._entries
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "McsTable":
        if not isinstance(data, dict):
            raise FormatError("MCS table must be a JSON object")
        allowed = {"schema", "version", "source", "entries"}
        extra = set(data) - allowed
        if extra:
            raise FormatError(f"unknown field(s) in MCS table: {sorted(extra)}")
        if data.get("schema", MCS_TABLE_SCHEMA) != MCS_TABLE_SCHEMA:
            raise FormatError(f"not an MCS table (schema={data.get('schema')!r})")
        if data.get("version") != MCS_TABLE_VERSION:
            raise SchemaVersionError(
                f"MCS table version {data.get('version')!r} unsupported (expected {MCS_TABLE_VERSION})"
            )
        if "entries" not in data:
            raise FormatError("MCS table is missing 'entries'")
        entries = []
        for i, raw in enumerate(data["entries"]):
            keys = {"index", "sinr_min_db", "sinr_max_db", "spectral_efficiency"}
            if set(raw) != keys:
                raise FormatError(f"entries[{i}]: expected keys {sorted(keys)}, got {sorted(raw)}")
            entries.append(
                McsEntry(int(raw["index"]), float(raw["sinr_min_db"]), float(raw["sinr_max_db"]),
                         float(raw["spectral_efficiency"]))
            )
        return cls(entries, source=data.get("source", ""))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "McsTable":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
        return cls.from_dict(data)

    @classmethod
    def default(cls) -> "McsTable":
        """The packaged TS 38.214 MCS index table 2 ladder, with surrogate SINR intervals."""
        text = resources.files("ngmc.data").joinpath("mcs_table2.json").read_text()
        return cls.from_dict(json.loads(text))


def interval_midpoint_db(sinr_min_db: float, sinr_max_db: float) -> float:
    """Midpoint of an SINR interval taken in the linear domain, returned in dB."""
    if not sinr_min_db < sinr_max_db:
        raise ValidationError(f"invalid SINR interval [{sinr_min_db}, {sinr_max_db}]")
    lo = 10 ** (sinr_min_db / 10)
    hi = 10 ** (sinr_max_db / 10)
    return 10 * math.log10((hi - lo) / 2 + lo)


def fit_se_regression(points: Sequence[tuple], se_cap: float = DEFAULT_SE_CAP) -> SeRegression:
    """Ordinary least-squares line through (sinr_db, se) points."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValidationError("points must be a sequence of (sinr_db, se) pairs")
    x, y = pts[:, 0], pts[:, 1]
    if np.unique(x).size < 2:
        raise ValidationError("need at least 2 distinct SINR values to fit a line")
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    slope = float(np.dot(dx, y - ym) / np.dot(dx, dx))
    intercept = float(ym - slope * xm)
    return SeRegression(slope=slope, intercept=intercept, se_cap=se_cap)


def regression_from_table(table: McsTable, se_cap: float = DEFAULT_SE_CAP) -> SeRegression:
    """Fit the SE line to the (linear-midpoint SINR, SE) pair of every MCS."""
    return fit_se_regression(list(zip(table.midpoints_db(), table.spectral_efficiencies())), se_cap)


def se_from_sinr(reg: SeRegression, sinr):
    """Regression SE clamped to [0, se_cap]. Accepts scalars or arrays."""
    se = np.clip(reg.slope * np.asarray(sinr, dtype=float) + reg.intercept, 0.0, reg.se_cap)
    return float(se) if se.ndim == 0 else se


def quantize_to_mcs(sinr: float, table: McsTable) -> Optional[McsEntry]:
    return table.lookup(sinr)
