"""Scenarios, sweeps and result records, with their JSON/CSV file formats.

Scenario file (version 1)::

    {"version": 1, "label": str,
     "volume": {"x_min", "x_max", "y_min", "y_max", "z_min", "z_max"},
     "ngmc_count": int,
     "ues": [{"id": str, "x": float, "y": float, "z": float}, ...],
     "manifest": {...}}                                    # optional

Result file (version 1)::

    {"version": 1, "scenario_label": str, "method": "obtained" | "geo_mean",
     "position": {"x", "y", "z"},
     "per_ue": [{"id", "sinr_db", "se", "capacity_bps"}, ...],
     "aggregate_capacity_bps": float,
     "sim": {"per_flow_throughput_bps": [...], "mean_delay_s", "p90_delay_s"},  # optional
     "seed": int | null, "timestamp": str | null,
     "manifest": {...}}                                    # optional

Non-finite SINR values (zero received power) are written as null.
Unknown keys are rejected on load.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .channel import Point3, Volume
from .errors import FormatError, SchemaVersionError, ValidationError

SCENARIO_VERSION = 1
RESULT_VERSION = 1
DEFAULT_UE_Z = 1.5


@dataclass(frozen=True)
class Ue:
    id: str
    position: Point3


@dataclass(frozen=True)
class Scenario:
    ues: tuple
    volume: Volume = field(default_factory=Volume)
    ngmc_count: int = 1
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "ues", tuple(self.ues))
        ids = [u.id for u in self.ues]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"UE ids must be unique: {ids}")
        for u in self.ues:
            if not self.volume.contains(u.position):
                raise ValidationError(f"UE {u.id!r} at {u.position} lies outside the scenario volume")
        if int(self.ngmc_count) != self.ngmc_count or self.ngmc_count < 1:
            raise ValidationError(f"ngmc_count must be >= 1, got {self.ngmc_count}")

    @property
    def ue_ids(self) -> list:
        return [u.id for u in self.ues]

    def ue_array(self) -> np.ndarray:
        """UE positions as a (U, 3) array."""
        return np.array([[u.position.x, u.position.y, u.position.z] for u in self.ues], dtype=float).reshape(-1, 3)


def scenario_from_points(points: Sequence, label: str = "", volume: Optional[Volume] = None,
                         ngmc_count: int = 1) -> Scenario:
    """Convenience constructor from (x, y, z) tuples; ids are ue1..ueN."""
    ues = [Ue(f"ue{i + 1}", p if isinstance(p, Point3) else Point3(*p)) for i, p in enumerate(points)]
    return Scenario(ues, volume or Volume(), ngmc_count, label)


def two_ue_line_scenario(separation: float = 1000.0, ue_z: float = DEFAULT_UE_Z) -> Scenario:
    """Two UEs on the x axis, ``separation`` meters apart, starting at the origin."""
    return scenario_from_points([(0.0, 0.0, ue_z), (separation, 0.0, ue_z)], label=f"pair-{separation:g}m")


def generate_scenario(n_ues: int, volume: Optional[Volume] = None, ue_z: float = DEFAULT_UE_Z,
                      seed: int = 0, label: Optional[str] = None, ngmc_count: int = 1) -> Scenario:
    """Uniformly random UE ground positions.

    Randomness comes from numpy's PCG64 seeded with the 64-bit ``seed``; x
    coordinates are drawn first, then y, so the output is fixed per seed.
    """
    if n_ues < 1:
        raise ValidationError(f"n_ues must be >= 1, got {n_ues}")
    volume = volume or Volume()
    rng = np.random.Generator(np.random.PCG64(seed))
    xs = rng.uniform(volume.x_min, volume.x_max, n_ues)
    ys = rng.uniform(volume.y_min, volume.y_max, n_ues)
    ues = [Ue(f"ue{i + 1}", Point3(float(x), float(y), ue_z)) for i, (x, y) in enumerate(zip(xs, ys))]
    return Scenario(ues, volume, ngmc_count, label if label is not None else f"random-n{n_ues}-s{seed}")


def generate_sweep(ue_a: Point3, ue_b: Point3, margin: float, step: float, z: float) -> list:
    """Evenly spaced points from ``margin`` past ue_a to ``margin`` short of ue_b.

    Both endpoints are included. The number of intervals is the smallest
    one whose spacing does not exceed ``step``; a step longer than the span
    yields only the two endpoints.
    """
    if not step > 0:
        raise ValidationError(f"step must be > 0, got {step}")
    if margin < 0:
        raise ValidationError(f"margin must be >= 0, got {margin}")
    dx, dy = ue_b.x - ue_a.x, ue_b.y - ue_a.y
    length = math.hypot(dx, dy)
    if not length > 2 * margin:
        raise ValidationError(f"segment of {length:g} m is too short for a {margin:g} m margin at both ends")
    ux, uy = dx / length, dy / length
    sx, sy = ue_a.x + margin * ux, ue_a.y + margin * uy
    ex, ey = ue_b.x - margin * ux, ue_b.y - margin * uy
    span = length - 2 * margin
    n = max(1, math.ceil(span / step - 1e-9))
    pts = []
    for k in range(n + 1):
        t = k / n
        pts.append(Point3((1 - t) * sx + t * ex, (1 - t) * sy + t * ey, z))
    return pts


# -- results ------------------------------------------------------------------

class Method(str, enum.Enum):
    OBTAINED = "obtained"
    GEO_MEAN = "geo_mean"


@dataclass(frozen=True)
class UeResult:
    id: str
    sinr_db: float
    se: float
    capacity_bps: float


@dataclass(frozen=True)
class SimSummary:
    per_flow_throughput_bps: tuple
    mean_delay_s: Optional[float] = None
    p90_delay_s: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "per_flow_throughput_bps", tuple(float(v) for v in self.per_flow_throughput_bps))

    @property
    def aggregate_throughput_bps(self) -> float:
        return float(sum(self.per_flow_throughput_bps))


@dataclass(frozen=True)
class ResultRecord:
    scenario_label: str
    method: Method
    position: Point3
    per_ue: tuple
    aggregate_capacity_bps: float
    sim: Optional[SimSummary] = None
    seed: Optional[int] = None
    timestamp: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "per_ue", tuple(self.per_ue))


# -- JSON helpers ---------------------------------------------------------------

def _read_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise FormatError(f"{path}: top level must be a JSON object")
    return data


def _check_keys(obj, required: set, optional: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise FormatError(f"{where}: expected an object")
    missing = required - set(obj)
    if missing:
        raise FormatError(f"{where}: missing field {sorted(missing)[0]!r}")
    unknown = set(obj) - required - optional
    if unknown:
        raise FormatError(f"{where}: unknown field {sorted(unknown)[0]!r}")


def _check_version(data: dict, expected: int, where: str) -> None:
    if "version" not in data:
        raise FormatError(f"{where}: missing field 'version'")
    if data["version"] != expected:
        raise SchemaVersionError(f"{where}: schema version {data['version']!r} unsupported (expected {expected})")


def _num(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FormatError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _point(obj, where: str) -> Point3:
    _check_keys(obj, {"x", "y", "z"}, set(), where)
    return Point3(_num(obj["x"], f"{where}.x"), _num(obj["y"], f"{where}.y"), _num(obj["z"], f"{where}.z"))


def _dump(data: dict, path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, allow_nan=False) + "\n")


def read_manifest(path) -> Optional[dict]:
    """The run manifest embedded in a JSON output file, or in a CSV's first comment line."""
    p = Path(path)
    if p.suffix.lower() == ".csv":
        with p.open() as fh:
            first = fh.readline()
        if first.startswith(CSV_MANIFEST_PREFIX):
            return json.loads(first[len(CSV_MANIFEST_PREFIX):])
        return None
    return _read_json(p).get("manifest")


# -- scenario files -----------------------------------------------------------------

def scenario_to_dict(scenario: Scenario, manifest: Optional[dict] = None) -> dict:
    data = {
        "version": SCENARIO_VERSION,
        "label": scenario.label,
        "volume": scenario.volume.as_dict(),
        "ngmc_count": scenario.ngmc_count,
        "ues": [{"id": u.id, **u.position.as_dict()} for u in scenario.ues],
    }
    if manifest is not None:
        data["manifest"] = manifest
    return data


def scenario_from_dict(data: dict, where: str = "scenario") -> Scenario:
    _check_keys(data, {"version", "label", "volume", "ngmc_count", "ues"}, {"manifest"}, where)
    _check_version(data, SCENARIO_VERSION, where)
    vol = data["volume"]
    keys = {"x_min", "x_max", "y_min", "y_max", "z_min", "z_max"}
    _check_keys(vol, keys, set(), f"{where}.volume")
    volume = Volume(**{k: _num(vol[k], f"{where}.volume.{k}") for k in sorted(keys)})
    if not isinstance(data["ues"], list):
        raise FormatError(f"{where}.ues: expected a list")
    ues = []
    for i, raw in enumerate(data["ues"]):
        _check_keys(raw, {"id", "x", "y", "z"}, set(), f"{where}.ues[{i}]")
        if not isinstance(raw["id"], str):
            raise FormatError(f"{where}.ues[{i}].id: expected a string")
        ues.append(Ue(raw["id"], _point({k: raw[k] for k in "xyz"}, f"{where}.ues[{i}]")))
    if isinstance(data["ngmc_count"], bool) or not isinstance(data["ngmc_count"], int):
        raise FormatError(f"{where}.ngmc_count: expected an integer")
    if not isinstance(data["label"], str):
        raise FormatError(f"{where}.label: expected a string")
    return Scenario(tuple(ues), volume, data["ngmc_count"], data["label"])


def save_scenario(scenario: Scenario, path, manifest: Optional[dict] = None) -> None:
    _dump(scenario_to_dict(scenario, manifest), path)


def load_scenario(path) -> Scenario:
    return scenario_from_dict(_read_json(path), where=str(path))


# -- result files ---------------------------------------------------------------

def _opt_float(v):
    return None if v is None or not math.isfinite(v) else float(v)


def result_to_dict(rec: ResultRecord, manifest: Optional[dict] = None) -> dict:
    data = {
        "version": RESULT_VERSION,
        "scenario_label": rec.scenario_label,
        "method": rec.method.value,
        "position": rec.position.as_dict(),
        "per_ue": [
            {"id": u.id, "sinr_db": _opt_float(u.sinr_db), "se": u.se, "capacity_bps": u.capacity_bps}
            for u in rec.per_ue
        ],
        "aggregate_capacity_bps": rec.aggregate_capacity_bps,
    }
    if rec.sim is not None:
        data["sim"] = {
            "per_flow_throughput_bps": list(rec.sim.per_flow_throughput_bps),
            "mean_delay_s": _opt_float(rec.sim.mean_delay_s),
            "p90_delay_s": _opt_float(rec.sim.p90_delay_s),
        }
    data["seed"] = rec.seed
    data["timestamp"] = rec.timestamp
    if manifest is not None:
        data["manifest"] = manifest
    return data


def result_from_dict(data: dict, where: str = "result") -> ResultRecord:
    _check_keys(
        data,
        {"version", "scenario_label", "method", "position", "per_ue", "aggregate_capacity_bps"},
        {"sim", "seed", "timestamp", "manifest"},
        where,
    )
    _check_version(data, RESULT_VERSION, where)
    try:
        method = Method(data["method"])
    except ValueError:
        raise FormatError(f"{where}.method: unknown method {data['method']!r}") from None
    per_ue = []
    for i, raw in enumerate(data["per_ue"]):
        w = f"{where}.per_ue[{i}]"
        _check_keys(raw, {"id", "sinr_db", "se", "capacity_bps"}, set(), w)
        sinr = -math.inf if raw["sinr_db"] is None else _num(raw["sinr_db"], f"{w}.sinr_db")
        per_ue.append(UeResult(raw["id"], sinr, _num(raw["se"], f"{w}.se"), _num(raw["capacity_bps"], f"{w}.capacity_bps")))
    sim = None
    if data.get("sim") is not None:
        s = data["sim"]
        _check_keys(s, {"per_flow_throughput_bps", "mean_delay_s", "p90_delay_s"}, set(), f"{where}.sim")
        sim = SimSummary(
            tuple(_num(v, f"{where}.sim.per_flow_throughput_bps") for v in s["per_flow_throughput_bps"]),
            None if s["mean_delay_s"] is None else _num(s["mean_delay_s"], f"{where}.sim.mean_delay_s"),
            None if s["p90_delay_s"] is None else _num(s["p90_delay_s"], f"{where}.sim.p90_delay_s"),
        )
    seed = data.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
        raise FormatError(f"{where}.seed: expected an integer or null")
    return ResultRecord(
        scenario_label=data["scenario_label"],
        method=method,
        position=_point(data["position"], f"{where}.position"),
        per_ue=tuple(per_ue),
        aggregate_capacity_bps=_num(data["aggregate_capacity_bps"], f"{where}.aggregate_capacity_bps"),
        sim=sim,
        seed=seed,
        timestamp=data.get("timestamp"),
    )


def save_result(rec: ResultRecord, path, manifest: Optional[dict] = None) -> None:
    _dump(result_to_dict(rec, manifest), path)


def load_result(path) -> ResultRecord:
    return result_from_dict(_read_json(path), where=str(path))


# -- CSV ----------------------------------------------------------------------------

CSV_MANIFEST_PREFIX = "# manifest="


def write_csv(path, header: Sequence[str], rows, manifest: Optional[dict] = None) -> None:
    """Plain CSV; an optional manifest goes on a leading '# manifest=' comment line."""
    with Path(path).open("w", newline="") as fh:
        if manifest is not None:
            fh.write(CSV_MANIFEST_PREFIX + json.dumps(manifest, sort_keys=True) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def read_csv(path) -> list:
    """Rows of a CSV written by write_csv, as dicts (comment lines skipped)."""
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))
