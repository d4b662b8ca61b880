"""Cell placement: maximise aggregate capacity over positions and associations.

Two solvers share one fitness: a real-coded genetic algorithm for the
general problem and an exhaustive lattice search used as an oracle for a
single cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .baseline import geo_mean_position
from .capacity import CLAMP, REJECT, AssociationMatrix, CapacityReport, aggregate_capacity, evaluate_batch
from .channel import ModelConfig, Point3
from .errors import UnsupportedError, ValidationError
from .link_adaptation import SeRegression
from .scenario import Scenario


@dataclass(frozen=True)
class PlacementProblem:
    scenario: Scenario
    cfg: ModelConfig = field(default_factory=ModelConfig)
    reg: SeRegression = field(default_factory=SeRegression)
    ngmc_count: Optional[int] = None
    fixed_z: float = 25.0
    free_z: bool = False

    def __post_init__(self):
        if self.ngmc_count is None:
            object.__setattr__(self, "ngmc_count", self.scenario.ngmc_count)
        if self.ngmc_count < 1:
            raise ValidationError(f"ngmc_count must be >= 1, got {self.ngmc_count}")
        vol = self.scenario.volume
        if not vol.z_min <= self.fixed_z <= vol.z_max:
            raise ValidationError(f"fixed_z={self.fixed_z} is outside the volume z range")

    @property
    def dims(self) -> int:
        return 3 if self.free_z else 2

    def bounds(self):
        v = self.scenario.volume
        lo = [v.x_min, v.y_min] + ([v.z_min] if self.free_z else [])
        hi = [v.x_max, v.y_max] + ([v.z_max] if self.free_z else [])
        return np.array(lo, dtype=float), np.array(hi, dtype=float)


@dataclass(frozen=True)
class GaParams:
    population_size: int = 200
    max_generations: int = 5000
    stall_tolerance: float = 1e-30
    stall_generations: int = 50
    crossover_rate: float = 0.8
    mutation_sigma: float = 50.0
    sigma_decay: float = 0.99
    tournament_size: int = 3
    elite_count: int = 2
    blend_alpha: float = 0.5
    reset_prob: Optional[float] = None  # association random-reset rate; None -> 1/U
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ValidationError("population_size must be >= 2")
        if self.max_generations < 0 or self.stall_generations < 1:
            raise ValidationError("generation limits must be positive")
        for name in ("crossover_rate",):
            if not 0 <= getattr(self, name) <= 1:
                raise ValidationError(f"{name} must be in [0, 1]")
        if self.reset_prob is not None and not 0 <= self.reset_prob <= 1:
            raise ValidationError("reset_prob must be in [0, 1]")
        if not self.mutation_sigma > 0:
            raise ValidationError("mutation_sigma must be > 0")
        if not 0 < self.sigma_decay <= 1:
            raise ValidationError("sigma_decay must be in (0, 1]")
        if self.tournament_size < 1:
            raise ValidationError("tournament_size must be >= 1")
        if not 0 <= self.elite_count < self.population_size:
            raise ValidationError("elite_count must be in [0, population_size)")


@dataclass
class Genome:
    """Cell coordinates (M x 2, or M x 3 with free z) and, for M > 1, a serving cell per UE."""

    positions: np.ndarray
    assoc: Optional[np.ndarray] = None


@dataclass(frozen=True)
class PlacementSolution:
    positions: tuple
    assoc: AssociationMatrix
    report: CapacityReport
    fitness: float
    generations_run: int
    evaluations: int
    feasible: bool


def _cells_array(pos: np.ndarray, problem: PlacementProblem) -> np.ndarray:
    """(P, M, D) genes -> (P, M, 3) repaired coordinates."""
    lo, hi = problem.bounds()
    pos = np.clip(pos, lo, hi)
    if problem.free_z:
        return pos
    z = np.full(pos.shape[:-1] + (1,), problem.fixed_z)
    return np.concatenate([pos, z], axis=-1)


def _fitness_batch(pos: np.ndarray, serving: np.ndarray, problem: PlacementProblem) -> np.ndarray:
    cells = _cells_array(pos, problem)
    out = evaluate_batch(problem.scenario.ue_array(), cells, serving, problem.cfg, problem.reg)
    fit = np.array([math.fsum(row) for row in out["capacity"]])
    # death penalty for any served pair outside the pathloss distance range
    fit[out["violation"].any(axis=1)] = 0.0
    return fit


def _serving(genome: Genome, n_ues: int) -> np.ndarray:
    if genome.assoc is None:
        return np.zeros(n_ues, dtype=int)
    return np.asarray(genome.assoc, dtype=int)


def genome_points(genome: Genome, problem: PlacementProblem) -> list:
    cells = _cells_array(np.asarray(genome.positions, dtype=float)[None], problem)[0]
    return [Point3(*c) for c in cells]


def evaluate_fitness(genome: Genome, problem: PlacementProblem) -> float:
    """Aggregate capacity of a genome after boundary repair, or 0 if any served pair is too close/far."""
    pos = np.asarray(genome.positions, dtype=float)
    if pos.shape != (problem.ngmc_count, problem.dims):
        raise ValidationError(f"genome positions shape {pos.shape} != {(problem.ngmc_count, problem.dims)}")
    serving = _serving(genome, len(problem.scenario.ues))
    return float(_fitness_batch(pos[None], serving[None], problem)[0])


def check_feasibility(positions: Sequence[Point3], assoc: AssociationMatrix, problem: PlacementProblem) -> list:
    """Human-readable violations of the single-association, distance and SE constraints."""
    cfg = problem.cfg
    positions = list(positions)
    scenario = problem.scenario
    if assoc.n_ues != len(scenario.ues) or assoc.n_cells != len(positions):
        raise ValidationError("association matrix shape does not match scenario and positions")
    violations = []
    rows = assoc.entries.sum(axis=1)
    for u in np.flatnonzero(rows != 1):
        violations.append(f"association: UE {scenario.ues[u].id} is associated with {rows[u]} cells (must be 1)")
    ok = rows == 1
    if not ok.any():
        return violations
    serving = assoc.entries.argmax(axis=1)
    cells = np.array([[p.x, p.y, p.z] for p in positions], dtype=float)[None]
    out = evaluate_batch(scenario.ue_array(), cells, serving[None], cfg, problem.reg)
    for u in np.flatnonzero(ok):
        d = out["d2d"][0, u]
        if not cfg.d2d_min <= d <= cfg.d2d_max:
            violations.append(
                f"distance: UE {scenario.ues[u].id} is {d:.3f} m (2D) from cell {serving[u]}, "
                f"outside [{cfg.d2d_min:g}, {cfg.d2d_max:g}] m"
            )
        se = out["se"][0, u]
        if not 0 <= se <= problem.reg.se_cap:
            violations.append(f"spectral efficiency: UE {scenario.ues[u].id} has SE {se} outside [0, {problem.reg.se_cap}]")
    return violations


def _solution(points: list, serving: np.ndarray, problem: PlacementProblem, generations: int,
              evaluations: int) -> PlacementSolution:
    assoc = AssociationMatrix.from_assignment(serving, problem.ngmc_count)
    violations = check_feasibility(points, assoc, problem)
    feasible = not violations
    report = aggregate_capacity(problem.scenario, points, assoc, problem.cfg, problem.reg,
                                policy=REJECT if feasible else CLAMP)
    fitness = report.aggregate_capacity if feasible else 0.0
    return PlacementSolution(tuple(points), assoc, report, fitness, generations, evaluations, feasible)


def _tournament(rng, fit: np.ndarray, n: int, k: int) -> np.ndarray:
    cand = rng.integers(0, fit.size, size=(n, k))
    return cand[np.arange(n), np.argmax(fit[cand], axis=1)]


def solve_ga(problem: PlacementProblem, params: GaParams = GaParams()) -> PlacementSolution:
    """Real-coded GA with elitism; the geo-mean placement seeds the population.

    Each generation draws its random numbers as whole arrays from a single
    PCG64 stream (row i belongs to child i), so a run is fully determined by
    ``params.seed`` and fitness evaluation order does not matter.
    """
    scenario = problem.scenario
    n_ues = len(scenario.ues)
    if n_ues == 0:
        raise ValidationError("cannot place a cell for a scenario without UEs")
    M, D, P = problem.ngmc_count, problem.dims, params.population_size
    lo, hi = problem.bounds()
    rng = np.random.Generator(np.random.PCG64(params.seed))
    reset_prob = params.reset_prob if params.reset_prob is not None else 1.0 / n_ues

    pos = rng.uniform(lo, hi, size=(P, M, D))
    srv = rng.integers(0, M, size=(P, n_ues)) if M > 1 else np.zeros((P, n_ues), dtype=int)
    gm = geo_mean_position(scenario, problem.fixed_z)
    seed_gene = np.array([gm.x, gm.y] + ([gm.z] if problem.free_z else []))
    pos[0] = seed_gene
    srv[0] = 0
    seed_genome = Genome(pos[0].copy(), srv[0].copy() if M > 1 else None)

    fit = _fitness_batch(pos, srv, problem)
    evaluations = P
    b = int(np.argmax(fit))
    best_fit, best_pos, best_srv = fit[b], pos[b].copy(), srv[b].copy()
    ref_fit, stall = best_fit, 0
    sigma = params.mutation_sigma
    n_children = P - params.elite_count
    n_pairs = (n_children + 1) // 2
    generations = 0

    for generations in range(1, params.max_generations + 1):
        elite = np.argsort(-fit, kind="stable")[: params.elite_count]
        pa = _tournament(rng, fit, n_pairs, params.tournament_size)
        pb = _tournament(rng, fit, n_pairs, params.tournament_size)
        a, bpos = pos[pa], pos[pb]

        # blend crossover on coordinates
        cross = rng.random(n_pairs) < params.crossover_rate
        low = np.minimum(a, bpos)
        span = np.abs(a - bpos)
        low = low - params.blend_alpha * span
        width = span * (1 + 2 * params.blend_alpha)
        c1 = low + rng.random(a.shape) * width
        c2 = low + rng.random(a.shape) * width
        c1 = np.where(cross[:, None, None], c1, a)
        c2 = np.where(cross[:, None, None], c2, bpos)
        kids = np.concatenate([c1, c2])[:n_children]
        kids = kids + rng.normal(0.0, sigma, size=kids.shape)
        kids = np.clip(kids, lo, hi)

        if M > 1:
            sa, sb = srv[pa], srv[pb]
            swap = (rng.random(sa.shape) < 0.5) & cross[:, None]
            k1, k2 = np.where(swap, sb, sa), np.where(swap, sa, sb)
            kid_srv = np.concatenate([k1, k2])[:n_children]
            reset = rng.random(kid_srv.shape) < reset_prob
            kid_srv = np.where(reset, rng.integers(0, M, size=kid_srv.shape), kid_srv)
        else:
            kid_srv = np.zeros((n_children, n_ues), dtype=int)

        kid_fit = _fitness_batch(kids, kid_srv, problem)
        evaluations += n_children
        pos = np.concatenate([pos[elite], kids])
        srv = np.concatenate([srv[elite], kid_srv])
        fit = np.concatenate([fit[elite], kid_fit])

        b = int(np.argmax(fit))
        if fit[b] > best_fit:
            best_fit, best_pos, best_srv = fit[b], pos[b].copy(), srv[b].copy()
        if best_fit - ref_fit >= params.stall_tolerance:
            ref_fit, stall = best_fit, 0
        else:
            stall += 1
            if stall >= params.stall_generations:
                break
        sigma *= params.sigma_decay

    best = Genome(best_pos, best_srv if M > 1 else None)
    if evaluate_fitness(seed_genome, problem) > evaluate_fitness(best, problem):
        best = seed_genome
    return _solution(genome_points(best, problem), _serving(best, n_ues), problem, generations, evaluations)


def grid_search(problem: PlacementProblem, step: float) -> PlacementSolution:
    """Exhaustive single-cell search on the x/y lattice at ``fixed_z``.

    Besides the lattice, 8 points at the minimum 2D distance around every UE
    are tried. Ties go to the smallest x, then the smallest y.
    """
    if problem.ngmc_count != 1:
        raise UnsupportedError("grid_search only supports a single cell")
    if not step > 0:
        raise ValidationError(f"step must be > 0, got {step}")
    v = problem.scenario.volume
    nx = int(math.floor((v.x_max - v.x_min) / step + 1e-9))
    ny = int(math.floor((v.y_max - v.y_min) / step + 1e-9))
    xs = v.x_min + step * np.arange(nx + 1)
    ys = v.y_min + step * np.arange(ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = [np.column_stack([gx.ravel(), gy.ravel()])]
    # nudge outward so rounding cannot put the ring inside the exclusion radius
    r = problem.cfg.d2d_min * (1 + 1e-9)
    ang = np.arange(8) * (np.pi / 4)
    for u in problem.scenario.ues:
        ring = np.column_stack([u.position.x + r * np.cos(ang), u.position.y + r * np.sin(ang)])
        inside = (ring[:, 0] >= v.x_min) & (ring[:, 0] <= v.x_max) & (ring[:, 1] >= v.y_min) & (ring[:, 1] <= v.y_max)
        pts.append(ring[inside])
    cand = np.concatenate(pts)
    if problem.free_z:
        cand = np.column_stack([cand, np.full(len(cand), problem.fixed_z)])
    n_ues = len(problem.scenario.ues)
    fit = np.empty(len(cand))
    chunk = 20000
    for s in range(0, len(cand), chunk):
        part = cand[s:s + chunk, None, :]
        fit[s:s + chunk] = _fitness_batch(part, np.zeros((len(part), n_ues), dtype=int), problem)
    top = np.flatnonzero(fit == fit.max())
    best = top[np.lexsort((cand[top, 1], cand[top, 0]))[0]]
    genome = Genome(cand[best][None, :])
    return _solution(genome_points(genome, problem), np.zeros(n_ues, dtype=int), problem, 0, len(cand))
