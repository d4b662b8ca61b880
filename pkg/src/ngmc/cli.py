"""Command-line pipeline: generate -> solve / baseline -> simulate -> report.

Every output file embeds a run manifest (subcommand, argv, inputs,
outputs, seeds, effective config, tool version) so that
``replay(manifest)`` reproduces it bit for bit.

Exit codes: 0 success, 2 usage or validation error, 3 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from collections import defaultdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .baseline import compare, geo_mean_position, max_pairwise_distance, pct_gain, pct_reduction
from .capacity import CLAMP, REJECT, AssociationMatrix, CapacityReport, aggregate_capacity
from .channel import ModelConfig, Point3, Volume
from .errors import DomainError, FormatError, NgmcError, UnsupportedError, ValidationError
from .link_adaptation import SeRegression
from .placement import GaParams, PlacementProblem, grid_search, solve_ga
from .scenario import (
    Method,
    ResultRecord,
    UeResult,
    generate_scenario,
    generate_sweep,
    load_result,
    load_scenario,
    save_result,
    save_scenario,
    write_csv,
)
from .simulator import SimConfig, export_delay_csv, replication_seeds, run_replications, summarize

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INTERNAL = 3
CELL_Z = 25.0


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


# -- config ------------------------------------------------------------------------

CONFIG_SECTIONS = {"model": ModelConfig, "ga": GaParams, "sim": SimConfig}


def _field_names(cls) -> set:
    return {f.name for f in dataclasses.fields(cls)}


def load_config(path: Optional[str]) -> dict:
    """Read a JSON config file with optional sections model / ga / sim."""
    if path is None:
        return {k: {} for k in CONFIG_SECTIONS}
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise FormatError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise FormatError(f"{path}: top level must be a JSON object")
    unknown = set(data) - set(CONFIG_SECTIONS)
    if unknown:
        raise FormatError(f"{path}: unknown config section {sorted(unknown)[0]!r}")
    out = {}
    for name, cls in CONFIG_SECTIONS.items():
        section = data.get(name, {})
        if not isinstance(section, dict):
            raise FormatError(f"{path}.{name}: expected an object")
        bad = set(section) - _field_names(cls)
        if bad:
            raise FormatError(f"{path}.{name}: unknown field {sorted(bad)[0]!r}")
        out[name] = dict(section)
    return out


def _build(cls, values: dict):
    try:
        return cls(**values)
    except TypeError as exc:
        raise ValidationError(str(exc)) from exc


def _effective(cfg_file: dict, args) -> tuple:
    """Defaults < config file < command-line flags."""
    model = dict(cfg_file["model"])
    ga = dict(cfg_file["ga"])
    sim = dict(cfg_file["sim"])
    for key, dest, section in (
        ("population", "population_size", ga),
        ("generations", "max_generations", ga),
        ("slots", "duration_slots", sim),
        ("link_mode", "link_mode", sim),
        ("traffic", "traffic_mode", sim),
        ("cbr_rate", "cbr_rate_bps", sim),
        ("error_prob", "per_tx_error_prob", sim),
        ("max_retx", "max_harq_retx", sim),
    ):
        value = getattr(args, key, None)
        if value is not None:
            section[dest] = value
    if getattr(args, "harq", False):
        sim["harq_enabled"] = True
    if args.seed is not None:
        ga["seed"] = args.seed
        sim["seed"] = args.seed
    return _build(ModelConfig, model), _build(GaParams, ga), _build(SimConfig, sim)


def _config_dict(model: ModelConfig, ga: GaParams, sim: SimConfig) -> dict:
    def plain(obj):
        return {k: (v.value if hasattr(v, "value") else v) for k, v in dataclasses.asdict(obj).items()}

    return {"model": plain(model), "ga": plain(ga), "sim": plain(sim)}


# -- manifest ------------------------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class RunManifest:
    subcommand: str
    argv: tuple
    inputs: tuple
    outputs: tuple
    seeds: tuple
    config: dict
    tool_version: str = __version__

    def as_dict(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "argv": list(self.argv),
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "seeds": list(self.seeds),
            "config": self.config,
            "tool_version": self.tool_version,
        }


def replay(manifest: dict) -> int:
    """Re-run the command recorded in a manifest."""
    if "argv" not in manifest:
        raise FormatError("manifest has no 'argv'")
    return main(list(manifest["argv"]))


def _timestamp(args) -> Optional[str]:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        return datetime.fromtimestamp(int(epoch), timezone.utc).isoformat()
    if getattr(args, "stamp", False):
        return datetime.now(timezone.utc).isoformat()
    return None


def _say(args, *parts):
    if not args.quiet:
        print(*parts)


def _warn(msg: str):
    print(f"warning: {msg}", file=sys.stderr)


def _require_out(args) -> str:
    if not args.out:
        raise _UsageError("--out is required")
    return args.out


def _single_cell(scenario) -> None:
    if scenario.ngmc_count != 1:
        raise UnsupportedError("the command line handles single-cell scenarios only (ngmc_count = 1)")


def _record(scenario, method: Method, position: Point3, report: CapacityReport, seed, args) -> ResultRecord:
    per_ue = tuple(
        UeResult(uid, s, se, c)
        for uid, s, se, c in zip(scenario.ue_ids, report.per_ue_sinr, report.per_ue_se, report.per_ue_capacity)
    )
    return ResultRecord(scenario.label, method, position, per_ue, report.aggregate_capacity,
                        seed=seed, timestamp=_timestamp(args))


# -- subcommands ---------------------------------------------------------------------

def cmd_generate(args, argv) -> int:
    out = _require_out(args)
    model, ga, sim = _effective(load_config(args.config), args)
    seed = 0 if args.seed is None else args.seed
    volume = Volume(*args.volume) if args.volume else Volume()
    scenario = generate_scenario(args.ues, volume, args.ue_z, seed, label=args.label)
    manifest = RunManifest("generate", argv, (), (out,), (seed,), _config_dict(model, ga, sim))
    save_scenario(scenario, out, manifest.as_dict())
    _say(args, f"wrote {len(scenario.ues)} UEs ({scenario.label}) to {out}")
    return EXIT_OK


def cmd_solve(args, argv) -> int:
    out = _require_out(args)
    model, ga, sim = _effective(load_config(args.config), args)
    scenario = load_scenario(args.scenario)
    _single_cell(scenario)
    if not scenario.ues:
        raise ValidationError("scenario has no UEs")
    problem = PlacementProblem(scenario, model, SeRegression())
    sol = solve_ga(problem, ga)
    pos = sol.positions[0]
    if not sol.feasible:
        _warn("no feasible placement found; capacity reported with clamped distances")
    _say(args, f"obtained position: ({pos.x:.3f}, {pos.y:.3f}, {pos.z:.3f})")
    _say(args, f"aggregate capacity: {sol.report.aggregate_capacity / 1e6:.6f} Mbit/s")
    _say(args, f"generations run: {sol.generations_run}")
    if args.grid_oracle is not None:
        oracle = grid_search(problem, args.grid_oracle)
        ratio = sol.fitness / oracle.fitness if oracle.fitness > 0 else float("nan")
        _say(args, f"grid oracle ({args.grid_oracle:g} m): {oracle.fitness / 1e6:.6f} Mbit/s, ratio {ratio:.6f}")
    rec = _record(scenario, Method.OBTAINED, pos, sol.report, ga.seed, args)
    manifest = RunManifest("solve", argv, (args.scenario,), (out,), (ga.seed,), _config_dict(model, ga, sim))
    save_result(rec, out, manifest.as_dict())
    return EXIT_OK


def _capacity_with_fallback(scenario, pos: Point3, model: ModelConfig) -> CapacityReport:
    assoc = AssociationMatrix.single_cell(len(scenario.ues))
    try:
        return aggregate_capacity(scenario, [pos], assoc, model, SeRegression(), REJECT)
    except DomainError as exc:
        _warn(f"{exc}; evaluated with clamped distances, a solver would give this placement fitness 0")
        return aggregate_capacity(scenario, [pos], assoc, model, SeRegression(), CLAMP)


def cmd_baseline(args, argv) -> int:
    out = _require_out(args)
    model, ga, sim = _effective(load_config(args.config), args)
    scenario = load_scenario(args.scenario)
    _single_cell(scenario)
    pos = geo_mean_position(scenario, args.z)
    report = _capacity_with_fallback(scenario, pos, model)
    _say(args, f"geo-mean position: ({pos.x:.3f}, {pos.y:.3f}, {pos.z:.3f})")
    _say(args, f"aggregate capacity: {report.aggregate_capacity / 1e6:.6f} Mbit/s")
    rec = _record(scenario, Method.GEO_MEAN, pos, report, None, args)
    manifest = RunManifest("baseline", argv, (args.scenario,), (out,), (), _config_dict(model, ga, sim))
    save_result(rec, out, manifest.as_dict())
    return EXIT_OK


def cmd_sweep(args, argv) -> int:
    out = _require_out(args)
    model, ga, sim = _effective(load_config(args.config), args)
    scenario = load_scenario(args.scenario)
    _single_cell(scenario)
    if len(scenario.ues) != 2:
        raise ValidationError(f"sweep needs exactly 2 UEs, scenario has {len(scenario.ues)}")
    a, b = (u.position for u in scenario.ues)
    points = generate_sweep(a, b, args.margin, args.step, args.z)
    assoc = AssociationMatrix.single_cell(2)
    reg = SeRegression()
    header = ["x", "y", "z", "aggregate_capacity_bps"]
    seeds = ()
    if args.simulate:
        header.append("aggregate_throughput_bps")
        seeds = tuple(replication_seeds(sim.seed, args.replications))
    rows = []
    for p in points:
        report = aggregate_capacity(scenario, [p], assoc, model, reg, REJECT)
        row = [p.x, p.y, p.z, report.aggregate_capacity]
        if args.simulate:
            runs = run_replications(scenario, p, assoc, model, reg, sim, args.replications, jobs=args.jobs)
            row.append(summarize(runs).aggregate_throughput_bps)
        rows.append(row)
        _say(args, "  ".join(f"{v:.6g}" for v in row))
    manifest = RunManifest("sweep", argv, (args.scenario,), (out,), seeds, _config_dict(model, ga, sim))
    write_csv(out, header, rows, manifest.as_dict())
    return EXIT_OK


def cmd_simulate(args, argv) -> int:
    out = _require_out(args)
    model, ga, sim = _effective(load_config(args.config), args)
    scenario = load_scenario(args.scenario)
    _single_cell(scenario)
    src = load_result(args.result)
    if src.scenario_label != scenario.label:
        raise ValidationError(
            f"result is for scenario {src.scenario_label!r}, not {scenario.label!r}"
        )
    if args.replications < 1:
        raise ValidationError("--replications must be >= 1")
    assoc = AssociationMatrix.single_cell(len(scenario.ues))
    runs = run_replications(scenario, src.position, assoc, model, SeRegression(), sim,
                            args.replications, jobs=args.jobs)
    summary = summarize(runs)
    seeds = tuple(replication_seeds(sim.seed, args.replications))
    outputs = (out,) + ((args.delays,) if args.delays else ())
    manifest = RunManifest("simulate", argv, (args.scenario, args.result), outputs, seeds,
                           _config_dict(model, ga, sim)).as_dict()
    rec = dataclasses.replace(src, sim=summary, seed=sim.seed, timestamp=_timestamp(args))
    save_result(rec, out, manifest)
    if args.delays:
        export_delay_csv(runs, args.delays, manifest)
    _say(args, f"aggregate throughput: {summary.aggregate_throughput_bps / 1e6:.6f} Mbit/s "
               f"(capacity {src.aggregate_capacity_bps / 1e6:.6f} Mbit/s)")
    if summary.mean_delay_s is not None:
        _say(args, f"mean delay: {summary.mean_delay_s * 1e3:.4f} ms, p90: {summary.p90_delay_s * 1e3:.4f} ms")
    return EXIT_OK


REPORT_HEADER = [
    "scenario_label", "diameter_m",
    "capacity_obtained_bps", "capacity_geo_mean_bps", "capacity_gain_pct",
    "throughput_obtained_bps", "throughput_geo_mean_bps", "throughput_gain_pct",
    "mean_delay_obtained_s", "mean_delay_geo_mean_s", "mean_delay_reduction_pct",
    "p90_delay_obtained_s", "p90_delay_geo_mean_s", "p90_delay_reduction_pct",
]


def _blank(v):
    return "" if v is None else v


def cmd_report(args, argv) -> int:
    out = _require_out(args)
    model, ga, sim = _effective(load_config(args.config), args)
    by_label = defaultdict(dict)
    for path in args.results:
        rec = load_result(path)
        if rec.method in by_label[rec.scenario_label]:
            raise ValidationError(f"two {rec.method.value} results for scenario {rec.scenario_label!r}")
        by_label[rec.scenario_label][rec.method] = rec
    unpaired = [lbl for lbl, recs in by_label.items() if len(recs) != 2]
    if unpaired:
        raise ValidationError(f"mismatched scenario labels: no obtained/geo-mean pair for {unpaired}")
    diameters = {}
    for path in args.scenarios or ():
        sc = load_scenario(path)
        diameters[sc.label] = max_pairwise_distance(sc) if len(sc.ues) >= 2 else 0.0
    rows = []
    for label in sorted(by_label):
        ob, gm = by_label[label][Method.OBTAINED], by_label[label][Method.GEO_MEAN]
        cap_gain = pct_gain(ob.aggregate_capacity_bps, gm.aggregate_capacity_bps)
        thr = (None, None, None)
        mean = (None, None, None)
        p90 = (None, None, None)
        if ob.sim is not None and gm.sim is not None:
            g = compare(ob.sim, gm.sim)
            thr = (ob.sim.aggregate_throughput_bps, gm.sim.aggregate_throughput_bps, g.throughput_gain_pct)
            mean = (ob.sim.mean_delay_s, gm.sim.mean_delay_s, g.delay_reduction_pct)
            p90 = (ob.sim.p90_delay_s, gm.sim.p90_delay_s, pct_reduction(ob.sim.p90_delay_s, gm.sim.p90_delay_s))
        row = [label, diameters.get(label), ob.aggregate_capacity_bps, gm.aggregate_capacity_bps, cap_gain,
               *thr, *mean, *p90]
        rows.append([_blank(v) for v in row])
        if cap_gain is not None:
            _say(args, f"{label}: capacity gain {cap_gain:.3f}%")
    inputs = tuple(args.results) + tuple(args.scenarios or ())
    manifest = RunManifest("report", argv, inputs, (out,), (), _config_dict(model, ga, sim))
    write_csv(out, REPORT_HEADER, rows, manifest.as_dict())
    return EXIT_OK


# -- parser ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with sections model, ga, sim")
    common.add_argument("--seed", type=int, help="64-bit seed for generation, GA and simulation")
    common.add_argument("--out", help="output path")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    common.add_argument("--stamp", action="store_true", help="record a UTC timestamp in result files")

    sim_flags = argparse.ArgumentParser(add_help=False)
    sim_flags.add_argument("--slots", type=int, help="slots per run")
    sim_flags.add_argument("--link-mode", choices=["se_line", "mcs_quantized"])
    sim_flags.add_argument("--traffic", choices=["full_buffer", "cbr"])
    sim_flags.add_argument("--cbr-rate", type=float, help="per-flow CBR rate in bit/s")
    sim_flags.add_argument("--harq", action="store_true", help="enable Bernoulli TB errors with HARQ")
    sim_flags.add_argument("--error-prob", type=float, help="per-transmission error probability")
    sim_flags.add_argument("--max-retx", type=int, help="HARQ retransmissions before drop")
    sim_flags.add_argument("--replications", type=int, default=1)
    sim_flags.add_argument("--jobs", type=int, default=1, help="worker processes for replications")

    parser = _ArgumentParser(prog="ngmc", description="Mobile-cell placement and desk-scale RAN evaluation")
    parser.add_argument("--version", action="version", version=f"ngmc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    p = sub.add_parser("generate", parents=[common], help="random UE scenario")
    p.add_argument("--ues", type=int, required=True)
    p.add_argument("--label")
    p.add_argument("--ue-z", type=float, default=1.5)
    p.add_argument("--volume", type=float, nargs=6, metavar=("XMIN", "XMAX", "YMIN", "YMAX", "ZMIN", "ZMAX"))
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", parents=[common], help="GA placement (obtained position)")
    p.add_argument("scenario")
    p.add_argument("--population", type=int)
    p.add_argument("--generations", type=int)
    p.add_argument("--grid-oracle", type=float, metavar="STEP", help="also run a grid search with this step")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("baseline", parents=[common], help="geo-mean placement")
    p.add_argument("scenario")
    p.add_argument("--z", type=float, default=CELL_Z)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("sweep", parents=[common, sim_flags], help="capacity along the segment between 2 UEs")
    p.add_argument("scenario")
    p.add_argument("--step", type=float, default=100.0)
    p.add_argument("--margin", type=float, default=100.0)
    p.add_argument("--z", type=float, default=CELL_Z)
    p.add_argument("--simulate", action="store_true", help="add simulated throughput per point")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", parents=[common, sim_flags], help="simulate a placement from a result file")
    p.add_argument("scenario")
    p.add_argument("--result", required=True, help="result file holding the position")
    p.add_argument("--delays", help="per-packet delay CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", parents=[common], help="gain table from obtained/geo-mean result pairs")
    p.add_argument("results", nargs="+")
    p.add_argument("--scenarios", nargs="*", help="scenario files, for the diameter column")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args, tuple(argv))
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NgmcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
