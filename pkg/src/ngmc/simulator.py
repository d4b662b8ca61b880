"""Slot-level OFDMA round-robin downlink simulator.

Models only MAC-level RB dealing plus the SE link abstraction: no fading,
no interference, no upper-layer protocol overhead. Each slot the cell's RBs
are dealt one at a time to its UEs, starting from an offset that rotates
every slot. A UE's bits per RB follow from its spectral efficiency, the
data subcarriers per RB, the SCS and the slot duration.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .capacity import AssociationMatrix, evaluate_batch
from .channel import ModelConfig, Point3
from .errors import DomainError, ValidationError
from .link_adaptation import McsTable, SeRegression, se_from_sinr
from .scenario import Scenario, SimSummary, write_csv


class LinkMode(str, enum.Enum):
    SE_LINE = "se_line"
    MCS_QUANTIZED = "mcs_quantized"


class TrafficMode(str, enum.Enum):
    FULL_BUFFER = "full_buffer"
    CBR = "cbr"


@dataclass(frozen=True)
class SimConfig:
    duration_slots: int = 1000
    link_mode: LinkMode = LinkMode.SE_LINE
    traffic_mode: TrafficMode = TrafficMode.FULL_BUFFER
    cbr_rate_bps: float = 1e8
    packet_size_bytes: int = 1500
    harq_enabled: bool = False
    per_tx_error_prob: float = 0.0
    max_harq_retx: int = 4
    harq_rtt_slots: int = 8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "link_mode", LinkMode(self.link_mode))
        object.__setattr__(self, "traffic_mode", TrafficMode(self.traffic_mode))
        if self.duration_slots < 1:
            raise ValidationError("duration_slots must be >= 1")
        if not 0 <= self.per_tx_error_prob < 1:
            raise ValidationError("per_tx_error_prob must be in [0, 1)")
        if not (self.cbr_rate_bps > 0 and self.packet_size_bytes > 0):
            raise ValidationError("cbr_rate_bps and packet_size_bytes must be positive")
        if self.max_harq_retx < 0 or self.harq_rtt_slots < 1:
            raise ValidationError("max_harq_retx must be >= 0 and harq_rtt_slots >= 1")


def slot_duration_s(numerology: int) -> float:
    return 1e-3 / 2 ** numerology


@dataclass(frozen=True)
class PacketRecord:
    flow_id: str
    arrival_s: float
    completion_s: float

    @property
    def delay_s(self) -> float:
        return self.completion_s - self.arrival_s


@dataclass(frozen=True)
class SimReport:
    flow_ids: tuple
    per_flow_throughput_bps: tuple
    aggregate_throughput_bps: float
    per_flow_mean_delay_s: tuple  # nan for flows without completed packets
    delay_samples_s: tuple  # one tuple of delays per flow, in arrival order
    slots_simulated: int
    served_bits: tuple
    offered_bits: tuple  # inf per flow under full buffer
    lost_packets: tuple
    packets: tuple = ()

    @property
    def mean_delay_s(self) -> Optional[float]:
        """Mean over flows of the per-flow mean delay."""
        means = [m for m in self.per_flow_mean_delay_s if not math.isnan(m)]
        return float(np.mean(means)) if means else None

    @property
    def p90_delay_s(self) -> Optional[float]:
        pooled = [d for flow in self.delay_samples_s for d in flow]
        return delay_percentile(pooled, 0.9) if pooled else None


def delay_percentile(samples: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the ceil(p*n)-th smallest sample (rank >= 1)."""
    if len(samples) == 0:
        raise ValidationError("percentile of an empty sample set")
    if not 0 <= p <= 1:
        raise ValidationError(f"p must be in [0, 1], got {p}")
    ordered = sorted(samples)
    rank = max(1, math.ceil(p * len(ordered) - 1e-12))
    return float(ordered[rank - 1])


def deal_rbs(order: Sequence[int], need: dict, n_rbs: int) -> dict:
    """Round-robin dealing of ``n_rbs`` RBs, one at a time, in ``order``.

    A UE leaves the rotation once it holds ``need[u]`` RBs (``math.inf`` for
    a UE that can always use more). Computed in closed form per full round,
    which gives the same result as dealing single RBs.
    """
    alloc = {u: 0 for u in order}
    active = [u for u in order if need[u] > 0]
    left = n_rbs
    while active and left > 0:
        m = len(active)
        rounds = min(min(need[u] - alloc[u] for u in active), left // m)
        if rounds == 0:
            for u in active[:left]:
                alloc[u] += 1
            break
        rounds = int(rounds)
        for u in active:
            alloc[u] += rounds
        left -= rounds * m
        active = [u for u in active if alloc[u] < need[u]]
    return alloc


class _Tb:
    __slots__ = ("bits", "segments", "attempts")

    def __init__(self, bits, segments):
        self.bits = bits
        self.segments = segments
        self.attempts = 0


def link_spectral_efficiency(sinr_db: np.ndarray, reg: SeRegression, mode: LinkMode,
                             table: Optional[McsTable]) -> np.ndarray:
    if mode is LinkMode.SE_LINE:
        return np.asarray(se_from_sinr(reg, sinr_db), dtype=float).reshape(np.shape(sinr_db))
    if table is None:
        table = McsTable.default()
    out = []
    for s in np.ravel(sinr_db):
        entry = table.lookup(float(s))
        out.append(0.0 if entry is None else min(entry.spectral_efficiency, reg.se_cap))
    return np.array(out).reshape(np.shape(sinr_db))


def run_simulation(scenario: Scenario, position, assoc: Optional[AssociationMatrix], cfg: ModelConfig,
                   reg: SeRegression, sim: SimConfig, mcs_table: Optional[McsTable] = None) -> SimReport:
    """Simulate ``sim.duration_slots`` downlink slots for a fixed placement."""
    n_ues = len(scenario.ues)
    if n_ues == 0:
        raise ValidationError("cannot simulate a scenario without UEs")
    positions = [position] if isinstance(position, Point3) else list(position)
    if assoc is None:
        assoc = AssociationMatrix.single_cell(n_ues)
    if assoc.n_ues != n_ues or assoc.n_cells != len(positions):
        raise ValidationError("association shape does not match scenario and positions")
    serving = assoc.serving_cells()
    cells = np.array([[p.x, p.y, p.z] for p in positions], dtype=float)[None]
    chain = evaluate_batch(scenario.ue_array(), cells, serving[None], cfg, reg)
    if chain["violation"].any():
        raise DomainError("placement is infeasible: a served UE violates the 2D distance range")
    se = link_spectral_efficiency(chain["sinr"][0], reg, sim.link_mode, mcs_table)

    T = slot_duration_s(cfg.numerology)
    bits_per_rb = se * cfg.data_subcarriers_per_rb * cfg.subcarrier_spacing_hz * T
    rng = np.random.Generator(np.random.PCG64(sim.seed))
    cbr = sim.traffic_mode is TrafficMode.CBR
    duration_s = sim.duration_slots * T

    # CBR arrivals: fixed inter-arrival with a random per-flow phase
    pkt_bits = sim.packet_size_bytes * 8.0
    arrivals = []
    if cbr:
        interval = pkt_bits / sim.cbr_rate_bps
        for _ in range(n_ues):
            phase = rng.uniform(0.0, interval)
            n = max(0, math.ceil((duration_s - phase) / interval))
            arrivals.append(phase + interval * np.arange(n))
    else:
        arrivals = [np.empty(0)] * n_ues
    next_arrival = [0] * n_ues
    queues = [deque() for _ in range(n_ues)]  # [packet index, unsent bits]
    delivered_pkt = [np.zeros(len(a)) for a in arrivals]
    completion = [np.full(len(a), np.nan) for a in arrivals]
    lost = [np.zeros(len(a), dtype=bool) for a in arrivals]
    harq = [[] for _ in range(n_ues)]  # (due slot, _Tb)
    served = np.zeros(n_ues)
    offered = np.zeros(n_ues)

    cell_ues = [[u for u in range(n_ues) if serving[u] == m] for m in range(len(positions))]

    for k in range(sim.duration_slots):
        t0 = k * T
        if cbr:
            for u in range(n_ues):
                arr = arrivals[u]
                i = next_arrival[u]
                while i < len(arr) and arr[i] <= t0:
                    queues[u].append([i, pkt_bits])
                    offered[u] += pkt_bits
                    i += 1
                next_arrival[u] = i

        for members in cell_ues:
            if not members:
                continue
            off = k % len(members)
            order = members[off:] + members[:off]
            need = {}
            for u in order:
                due_bits = sum(tb.bits for due, tb in harq[u] if due <= k)
                demand = (sum(q[1] for q in queues[u]) if cbr else math.inf) + due_bits
                if demand <= 0:
                    need[u] = 0
                elif bits_per_rb[u] <= 0 or math.isinf(demand):
                    need[u] = math.inf
                else:
                    need[u] = math.ceil(demand / bits_per_rb[u] - 1e-9)
            alloc = deal_rbs(order, need, cfg.rb_count)

            for u in order:
                cap = alloc[u] * bits_per_rb[u]
                if cap <= 0:
                    continue
                sending = []
                pending = []
                for due, tb in sorted(harq[u], key=lambda e: e[0]):
                    if due <= k and tb.bits <= cap * (1 + 1e-12):
                        sending.append(tb)
                        cap -= tb.bits
                    else:
                        pending.append((due, tb))
                harq[u] = pending
                if cap > 1e-9:
                    if cbr:
                        segs, take = [], 0.0
                        q = queues[u]
                        while q and cap - take > 1e-9:
                            part = min(q[0][1], cap - take)
                            segs.append((q[0][0], part))
                            take += part
                            q[0][1] -= part
                            if q[0][1] <= 1e-9:
                                q.popleft()
                        if segs:
                            sending.append(_Tb(take, segs))
                    else:
                        sending.append(_Tb(cap, ()))
                for tb in sending:
                    failed = sim.harq_enabled and rng.random() < sim.per_tx_error_prob
                    if not failed:
                        served[u] += tb.bits
                        for pid, b in tb.segments:
                            delivered_pkt[u][pid] += b
                            if delivered_pkt[u][pid] >= pkt_bits * (1 - 1e-12) and not lost[u][pid]:
                                completion[u][pid] = (k + 1) * T
                        continue
                    tb.attempts += 1
                    if tb.attempts <= sim.max_harq_retx:
                        harq[u].append((k + sim.harq_rtt_slots, tb))
                    else:
                        for pid, _ in tb.segments:
                            lost[u][pid] = True

    ids = tuple(scenario.ue_ids)
    thr = tuple(float(b / duration_s) for b in served)
    samples, means, packets = [], [], []
    for u in range(n_ues):
        done = ~np.isnan(completion[u]) & ~lost[u]
        d = completion[u][done] - arrivals[u][done]
        samples.append(tuple(float(x) for x in d))
        means.append(float(d.mean()) if d.size else math.nan)
        packets.extend(PacketRecord(ids[u], float(a), float(c))
                       for a, c in zip(arrivals[u][done], completion[u][done]))
    return SimReport(
        flow_ids=ids,
        per_flow_throughput_bps=thr,
        aggregate_throughput_bps=math.fsum(thr),
        per_flow_mean_delay_s=tuple(means),
        delay_samples_s=tuple(samples),
        slots_simulated=sim.duration_slots,
        served_bits=tuple(float(b) for b in served),
        offered_bits=tuple(float(b) if cbr else math.inf for b in offered),
        lost_packets=tuple(int(x.sum()) for x in lost),
        packets=tuple(packets),
    )


def replication_seeds(seed: int, n: int) -> list:
    """Independent 64-bit seeds for ``n`` replications derived from one base seed."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1, np.uint64)[0]) for c in children]


def _run_one(args):
    return run_simulation(*args)


def run_replications(scenario: Scenario, position, assoc, cfg: ModelConfig, reg: SeRegression,
                     sim: SimConfig, replications: int, mcs_table: Optional[McsTable] = None,
                     jobs: int = 1) -> list:
    """Independent runs with seeds derived from ``sim.seed``; order of results is fixed."""
    from dataclasses import replace

    jobs_args = [
        (scenario, position, assoc, cfg, reg, replace(sim, seed=s), mcs_table)
        for s in replication_seeds(sim.seed, replications)
    ]
    if jobs > 1 and replications > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_one, jobs_args))
    return [_run_one(a) for a in jobs_args]


def summarize(reports: Sequence[SimReport]) -> SimSummary:
    """Merge replications: mean per-flow throughput, mean of run delays, pooled p90."""
    if not reports:
        raise ValidationError("no simulation reports to summarize")
    thr = np.mean([r.per_flow_throughput_bps for r in reports], axis=0)
    delays = [r.mean_delay_s for r in reports if r.mean_delay_s is not None]
    pooled = [d for r in reports for flow in r.delay_samples_s for d in flow]
    return SimSummary(
        per_flow_throughput_bps=tuple(float(v) for v in thr),
        mean_delay_s=float(np.mean(delays)) if delays else None,
        p90_delay_s=delay_percentile(pooled, 0.9) if pooled else None,
    )


def export_delay_csv(reports, path, manifest: Optional[dict] = None) -> None:
    """One row per completed packet: flow_id, arrival_s, completion_s, delay_s."""
    if isinstance(reports, SimReport):
        reports = [reports]
    rows = [
        (p.flow_id, p.arrival_s, p.completion_s, p.delay_s)
        for r in reports for p in r.packets
    ]
    write_csv(path, ["flow_id", "arrival_s", "completion_s", "delay_s"], rows, manifest)
