"""Fitness, sweeps over the design space, ranking, friction grid search and sim-to-real gap."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .design_space import N_DESIGNS, DesignGenome, genome_from_index
from .physics import MaterialParams, SimParams, SimulationUnstable, Trajectory, build_lattice, simulate

log = logging.getLogger(__name__)

HEADING_EPSILON = 1e-5  # m; below this net displacement a heading is undefined
HEADING_MATCH = math.pi / 2


def fitness(traj: Trajectory) -> float:
    """Planar distance between the final and initial center of mass."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    dx, dy = traj.displacement()
    return math.hypot(dx, dy)


def wrap_angle(a: float) -> float:
    """Wrap into (-pi, pi]."""
    a = math.remainder(a, 2.0 * math.pi)
    return math.pi if a <= -math.pi else a


def heading(traj: Trajectory) -> float:
    """Direction of net planar displacement in radians, NaN when below ``HEADING_EPSILON``."""
    if fitness(traj) < HEADING_EPSILON:
        return math.nan
    dx, dy = traj.displacement()
    return wrap_angle(math.atan2(dy, dx))


def heading_difference(a: float, b: float) -> float:
    """Absolute wrapped difference in [0, pi]; NaN if either heading is undefined."""
    if math.isnan(a) or math.isnan(b):
        return math.nan
    return abs(wrap_angle(a - b))


@dataclass(frozen=True)
class EvalResult:
    genome_index: int
    fitness: float
    final_xy: tuple[float, float]
    heading: float  # NaN when undefined
    aborted: bool = False

    @property
    def genome(self) -> DesignGenome:
        return genome_from_index(self.genome_index)

    @property
    def heading_defined(self) -> bool:
        return not math.isnan(self.heading)

    def same_as(self, other: "EvalResult") -> bool:
        """Field-wise equality treating NaN == NaN (bitwise-style comparison)."""
        a = dataclasses.astuple(self)
        b = dataclasses.astuple(other)
        return _nan_equal(a, b)


def _nan_equal(a, b) -> bool:
    if isinstance(a, tuple):
        return isinstance(b, tuple) and len(a) == len(b) and all(_nan_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
        return True
    return a == b


def params_fingerprint(sp: SimParams, mp: MaterialParams) -> str:
    payload = json.dumps({"sim": dataclasses.asdict(sp), "material": dataclasses.asdict(mp)},
                         sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


@dataclass
class SweepResult:
    results: list[EvalResult]
    params_fingerprint: str
    # diagnostics only, not part of the persisted record
    stats: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for i, r in enumerate(self.results):
            if r.genome_index != i:
                raise ValueError(f"result slot {i} holds genome index {r.genome_index}")

    def __len__(self) -> int:
        return len(self.results)

    def fitness_array(self) -> np.ndarray:
        return np.array([r.fitness for r in self.results])

    @property
    def abort_count(self) -> int:
        return sum(r.aborted for r in self.results)

    def same_as(self, other: "SweepResult") -> bool:
        return (self.params_fingerprint == other.params_fingerprint
                and len(self) == len(other)
                and all(a.same_as(b) for a, b in zip(self.results, other.results)))


def evaluate(index: int, sp: SimParams, mp: MaterialParams, highres: bool = False) -> tuple[EvalResult, int]:
    """Simulate one genome; returns the record and the substep count it ran with."""
    g = genome_from_index(index)
    n_sub = 0
    try:
        if g.n_voxels == 0:
            traj = simulate(g, sp, mp)
        else:
            state = build_lattice(g, sp, mp, highres=highres)
            n_sub = state.model.n_substeps
            traj = simulate(g, sp, mp, state=state)
    except SimulationUnstable as exc:
        log.warning("%s", exc)
        return EvalResult(index, 0.0, (math.nan, math.nan), math.nan, True), n_sub
    fx, fy = traj.final_com[:2]
    return EvalResult(index, fitness(traj), (float(fx), float(fy)), heading(traj), False), n_sub


def _evaluate_batch(indices: Sequence[int], sp: SimParams, mp: MaterialParams,
                    highres: bool) -> list[tuple[EvalResult, int]]:
    return [evaluate(i, sp, mp, highres) for i in indices]


def evaluate_genomes(indices: Sequence[int], sp: SimParams, mp: MaterialParams, workers: int = 1,
                     batch: int = 50, highres: bool = False,
                     progress: Callable[[int, int], None] | None = None) -> tuple[list[EvalResult], list[int]]:
    """Evaluate ``indices`` in batches; output order follows ``indices`` whatever the scheduling."""
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if batch < 1:
        raise ValueError("batch must be >= 1")
    indices = list(indices)
    chunks = [(start, indices[start:start + batch]) for start in range(0, len(indices), batch)]
    slots: list = [None] * len(indices)
    done = 0

    def gather(start, out):
        nonlocal done
        slots[start:start + len(out)] = out
        done += len(out)
        if progress is not None:
            progress(done, len(indices))

    if workers == 1:
        for start, chunk in chunks:
            gather(start, _evaluate_batch(chunk, sp, mp, highres))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_evaluate_batch, chunk, sp, mp, highres): start
                       for start, chunk in chunks}
            for fut in as_completed(futures):
                gather(futures[fut], fut.result())
    return [s[0] for s in slots], [s[1] for s in slots]


def exhaustive_sweep(sp: SimParams | None = None, mp: MaterialParams | None = None, workers: int = 1,
                     batch: int = 50, highres: bool = False,
                     progress: Callable[[int, int], None] | None = None) -> SweepResult:
    sp = sp or SimParams()
    mp = mp or MaterialParams()
    if progress is None:
        def progress(done, total):
            log.info("evaluated %d/%d designs", done, total)
    t0 = time.perf_counter()
    results, substeps = evaluate_genomes(range(N_DESIGNS), sp, mp, workers, batch, highres, progress)
    stats = {
        "wall_time_s": time.perf_counter() - t0,
        "substeps": dict(sorted(Counter(substeps).items())),
    }
    return SweepResult(results, params_fingerprint(sp, mp), stats)


def top_k(sweep: SweepResult, k: int) -> list[EvalResult]:
    """The ``k`` fittest designs, fitness descending, ties by ascending genome index."""
    if not 1 <= k <= len(sweep):
        raise ValueError(f"k must lie in [1, {len(sweep)}]")
    return sorted(sweep.results, key=lambda r: (-r.fitness, r.genome_index))[:k]


@dataclass(frozen=True)
class FrictionCell:
    static_friction: float
    kinetic_friction: float
    match_count: int
    mean_heading_gap: float  # NaN when no heading could be compared
    skipped: bool = False


@dataclass
class FrictionSearch:
    cells: list[FrictionCell]
    best: FrictionCell | None


def friction_grid_search(genomes: Sequence[DesignGenome], reference_headings: Sequence[float],
                         mu_s_grid: Sequence[float], mu_k_grid: Sequence[float],
                         sp: SimParams | None = None, mp: MaterialParams | None = None,
                         highres: bool = False) -> FrictionSearch:
    """Re-simulate every genome on each (mu_s, mu_k) cell and count heading matches.

    A simulated heading matches when it lies within pi/2 of the reference.
    Cells with mu_s < mu_k are reported as skipped.
    """
    sp = sp or SimParams()
    mp = mp or MaterialParams()
    if len(genomes) != len(reference_headings):
        raise ValueError("genome and heading lists differ in length")
    if not mu_s_grid or not mu_k_grid:
        raise ValueError("friction grids must be nonempty")
    cells = []
    for mu_s in mu_s_grid:
        for mu_k in mu_k_grid:
            if mu_s < mu_k:
                cells.append(FrictionCell(mu_s, mu_k, 0, math.nan, skipped=True))
                continue
            cell_mp = mp.replace(static_friction=mu_s, kinetic_friction=mu_k)
            gaps = []
            for g, ref in zip(genomes, reference_headings):
                try:
                    h = heading(simulate(g, sp, cell_mp, highres=highres))
                except SimulationUnstable as exc:
                    log.warning("%s", exc)
                    h = math.nan
                gaps.append(heading_difference(h, ref))
            defined = [x for x in gaps if not math.isnan(x)]
            matches = sum(x < HEADING_MATCH for x in defined)
            mean_gap = float(np.mean(defined)) if defined else math.nan
            cells.append(FrictionCell(mu_s, mu_k, matches, mean_gap))
            log.info("mu_s=%g mu_k=%g: %d/%d headings match", mu_s, mu_k, matches, len(genomes))
    live = [c for c in cells if not c.skipped]
    # most matches, then smallest mean gap (undefined last), then grid order
    best = min(live, key=lambda c: (-c.match_count, math.inf if math.isnan(c.mean_heading_gap)
                                    else c.mean_heading_gap), default=None)
    return FrictionSearch(cells, best)


class GapMetrics(NamedTuple):
    displacement_ratio: float  # NaN when either displacement is below HEADING_EPSILON
    heading_gap: float  # radians in [0, pi], NaN when either heading is undefined
    final_position_error: float  # m

    @property
    def flagged(self) -> bool:
        return math.isnan(self.displacement_ratio)


def reality_gap(sim: Trajectory, real: Trajectory) -> GapMetrics:
    if len(sim) == 0 or len(real) == 0:
        raise ValueError("empty trajectory")
    f_sim = fitness(sim)
    f_real = fitness(real)
    ratio = f_sim / f_real if min(f_sim, f_real) >= HEADING_EPSILON else math.nan
    gap = heading_difference(heading(sim), heading(real))
    err = float(np.hypot(*(sim.displacement() - real.displacement())))
    return GapMetrics(ratio, gap, err)
