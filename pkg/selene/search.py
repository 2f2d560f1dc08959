"""Grid search over the construction parameters (alpha_i, beta_i, TOF).

Each grid point is propagated from its departure state; non-colliding
guesses are handed to the corrector.  The sweep is split into rows (one
(alpha, beta) pair, a run of TOFs) so a row can share one propagation and
so rows can be farmed out to worker processes while results are still
consumed in grid-index order.
"""

from __future__ import annotations

import logging
import math
import multiprocessing as mp
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from itertools import islice
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from selene.analysis import detect_branches
from selene.catalog import Catalog, TransferSolution
from selene.corrector import ARM_FACTOR, CorrectionSettings, correct
from selene.dynamics import PlanarState, PropagationOptions, propagate
from selene.errors import IntegrationError, InvalidInputError
from selene.transfer import ConstructionParams, OrbitSpec, departure_state, psi_f

logger = logging.getLogger(__name__)

# Tolerance on span/step when counting axis points, so 0.014/0.0002 counts as 70 steps.
_COUNT_SLACK = 1e-9


# ------------------------------------------------------------------
# Grid
# ------------------------------------------------------------------

@dataclass(frozen=True)
class AxisSpec:
    """``min + k*step`` for k = 0 .. count-1; ``closed`` includes the max endpoint."""

    min: float
    max: float
    step: float
    closed: bool = True

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.min, self.max, self.step)):
            raise InvalidInputError(f"axis bounds must be finite: {self!r}")
        if not self.step > 0.0:
            raise InvalidInputError(f"axis step must be positive, got {self.step!r}")

    @property
    def count(self) -> int:
        if self.max < self.min:
            return 0
        if self.max == self.min:
            return 1
        span = (self.max - self.min) / self.step
        if self.closed:
            return int(math.floor(span + _COUNT_SLACK)) + 1
        return int(math.ceil(span - _COUNT_SLACK))

    def value(self, k: int) -> float:
        return self.min + k * self.step

    def values(self) -> List[float]:
        return [self.value(k) for k in range(self.count)]


@dataclass(frozen=True)
class GridSpec:
    alpha: AxisSpec = field(default_factory=lambda: AxisSpec(0.0, 2.0 * math.pi, math.pi / 36.0, closed=False))
    beta: AxisSpec = field(default_factory=lambda: AxisSpec(1.4, 1.414, 0.0002))
    tof: AxisSpec = field(default_factory=lambda: AxisSpec(math.pi / 50.0, 10.0 * math.pi, math.pi / 50.0))

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.alpha.count, self.beta.count, self.tof.count)

    @property
    def size(self) -> int:
        na, nb, nt = self.shape
        return na * nb * nt

    def index(self, ia: int, ib: int, it: int) -> int:
        _, nb, nt = self.shape
        return (ia * nb + ib) * nt + it

    def unravel(self, index: int) -> Tuple[int, int, int]:
        _, nb, nt = self.shape
        row, it = divmod(index, nt)
        ia, ib = divmod(row, nb)
        return ia, ib, it

    def point(self, index: int) -> ConstructionParams:
        if not 0 <= index < self.size:
            raise InvalidInputError(f"grid index {index} out of range [0, {self.size})")
        ia, ib, it = self.unravel(index)
        return ConstructionParams(self.alpha.value(ia), self.beta.value(ib), self.tof.value(it))


def enumerate_grid(grid: GridSpec) -> Iterator[ConstructionParams]:
    """Every grid point in lexicographic (alpha, beta, tof) order."""
    alphas, betas, tofs = grid.alpha.values(), grid.beta.values(), grid.tof.values()
    for alpha in alphas:
        for beta in betas:
            for tof in tofs:
                yield ConstructionParams(alpha, beta, tof)


def indexed_grid(grid: GridSpec, start: int = 0) -> Iterator[Tuple[int, ConstructionParams]]:
    return islice(enumerate(enumerate_grid(grid)), start, None)


# ------------------------------------------------------------------
# Candidates
# ------------------------------------------------------------------

class CandidateStatus(str, Enum):
    FEASIBLE_GUESS = "feasible_guess"
    COLLIDED = "collided"
    INTEGRATOR_FAILURE = "integrator_failure"


@dataclass(frozen=True)
class Candidate:
    params: ConstructionParams
    status: CandidateStatus
    final_state: Optional[PlanarState] = None
    psi_f_norm: Optional[float] = None
    time: float = 0.0
    grid_index: int = -1

    @property
    def feasible(self) -> bool:
        return self.status is CandidateStatus.FEASIBLE_GUESS


def _guess_options(orbit: OrbitSpec, dense: bool = False) -> PropagationOptions:
    return PropagationOptions(arm_radius=ARM_FACTOR * orbit.r_i, dense=dense)


def _feasible(params: ConstructionParams, state: PlanarState, orbit: OrbitSpec, t: float, index: int) -> Candidate:
    norm = float(math.hypot(*psi_f(state, orbit)))
    return Candidate(params, CandidateStatus.FEASIBLE_GUESS, state, norm, t, index)


def evaluate_candidate(params: ConstructionParams, orbit: OrbitSpec, grid_index: int = -1) -> Candidate:
    """Propagate the departure state for ``params.tof`` with collision events armed."""
    try:
        result = propagate(departure_state(params, orbit), params.tof, orbit.constants, _guess_options(orbit))
    except IntegrationError as err:
        logger.debug("integrator failure at grid index %d: %s", grid_index, err.format())
        return Candidate(params, CandidateStatus.INTEGRATOR_FAILURE, time=err.time, grid_index=grid_index)
    if not result.completed:
        return Candidate(params, CandidateStatus.COLLIDED, time=result.time, grid_index=grid_index)
    return _feasible(params, result.final, orbit, result.time, grid_index)


def evaluate_fan(
    alpha: float,
    beta: float,
    tofs: Sequence[float],
    orbit: OrbitSpec,
    grid_indices: Optional[Sequence[int]] = None,
) -> List[Candidate]:
    """Evaluate every TOF of one (alpha, beta) row from a single propagation.

    The arc is integrated once to the largest TOF and sampled through dense
    output; a collision at t_c marks every TOF >= t_c as collided.
    """
    indices = list(grid_indices) if grid_indices is not None else [-1] * len(tofs)
    if not tofs:
        return []
    params = [ConstructionParams(alpha, beta, t) for t in tofs]
    try:
        result = propagate(
            departure_state(params[0], orbit), max(tofs), orbit.constants, _guess_options(orbit, dense=True),
        )
    except IntegrationError:
        return [evaluate_candidate(p, orbit, i) for p, i in zip(params, indices)]

    out = []
    for p, index in zip(params, indices):
        if not result.completed and p.tof >= result.time:
            out.append(Candidate(p, CandidateStatus.COLLIDED, time=result.time, grid_index=index))
        elif p.tof == result.time:
            out.append(_feasible(p, result.final, orbit, p.tof, index))
        else:
            out.append(_feasible(p, result.state_at(p.tof), orbit, p.tof, index))
    return out


def screen(candidate: Candidate, threshold: Optional[float] = None) -> bool:
    """Whether *candidate* goes on to correction; ``threshold=None`` disables the psi_f cut."""
    if not candidate.feasible:
        return False
    return threshold is None or candidate.psi_f_norm < threshold


# ------------------------------------------------------------------
# Branch mask
# ------------------------------------------------------------------

@dataclass(frozen=True)
class BranchMask:
    """Admits only (alpha, TOF) pairs that fall inside a known TOF band.

    Built from a reference catalog: at the nearest populated alpha, a TOF is
    admitted when it lies within ``margin_days`` of some band.
    """

    bands: Tuple[Tuple[float, Tuple[Tuple[float, float], ...]], ...]
    margin_days: float = 5.0

    @classmethod
    def from_catalog(cls, catalog: Catalog, gap_threshold_days: float = 10.0, margin_days: float = 5.0) -> BranchMask:
        entries = []
        for alpha in catalog.alphas():
            report = detect_branches(catalog, alpha, gap_threshold_days)
            entries.append((alpha, tuple((b.tof_min, b.tof_max) for b in report.bands)))
        return cls(tuple(entries), margin_days)

    def admits(self, alpha: float, tof_days: float) -> bool:
        if not self.bands:
            return True
        _, intervals = min(self.bands, key=lambda entry: _circular_distance(entry[0], alpha))
        m = self.margin_days
        return any(lo - m <= tof_days <= hi + m for lo, hi in intervals)


def _circular_distance(a: float, b: float) -> float:
    d = abs(a - b) % (2.0 * math.pi)
    return min(d, 2.0 * math.pi - d)


# ------------------------------------------------------------------
# Rows
# ------------------------------------------------------------------

@dataclass(frozen=True)
class SweepContext:
    """Everything a worker needs to process a row.  Picklable."""

    orbit: OrbitSpec
    grid: GridSpec
    settings: CorrectionSettings
    screen_threshold: Optional[float] = None
    shared_arcs: bool = True
    mask: Optional[BranchMask] = None


@dataclass(frozen=True)
class RowTask:
    ia: int
    ib: int
    it_start: int
    it_stop: int


@dataclass(frozen=True)
class RowResult:
    start: int
    stop: int
    candidates: Dict[str, int]
    corrections: Dict[str, int]
    masked: int
    screened_out: int
    solutions: Tuple[TransferSolution, ...]

    @property
    def processed(self) -> int:
        return self.stop - self.start


def iter_row_tasks(grid: GridSpec, start: int = 0) -> Iterator[RowTask]:
    """Row tasks covering grid indices ``start .. size-1`` in order."""
    na, nb, nt = grid.shape
    if nt == 0:
        return
    for ia in range(na):
        for ib in range(nb):
            row_start = grid.index(ia, ib, 0)
            if row_start + nt <= start:
                continue
            yield RowTask(ia, ib, max(0, start - row_start), nt)


def process_row(ctx: SweepContext, task: RowTask) -> RowResult:
    grid, orbit = ctx.grid, ctx.orbit
    alpha, beta = grid.alpha.value(task.ia), grid.beta.value(task.ib)
    start = grid.index(task.ia, task.ib, task.it_start)
    stop = grid.index(task.ia, task.ib, task.it_stop - 1) + 1

    indices, tofs = [], []
    masked = 0
    for it in range(task.it_start, task.it_stop):
        tof = grid.tof.value(it)
        if ctx.mask is not None and not ctx.mask.admits(alpha, orbit.constants.dimensional_time(tof)):
            masked += 1
            continue
        indices.append(grid.index(task.ia, task.ib, it))
        tofs.append(tof)

    if ctx.shared_arcs:
        candidates = evaluate_fan(alpha, beta, tofs, orbit, indices)
    else:
        candidates = [evaluate_candidate(ConstructionParams(alpha, beta, t), orbit, i) for t, i in zip(tofs, indices)]

    candidate_counts: Counter = Counter()
    correction_counts: Counter = Counter()
    screened_out = 0
    solutions = []
    for candidate in candidates:
        candidate_counts[candidate.status.value] += 1
        if not candidate.feasible:
            continue
        if not screen(candidate, ctx.screen_threshold):
            screened_out += 1
            continue
        outcome = correct(candidate, orbit, ctx.settings)
        correction_counts[outcome.status.value] += 1
        if outcome.converged:
            solutions.append(TransferSolution.from_outcome(outcome, orbit, candidate.grid_index))

    return RowResult(
        start=start,
        stop=stop,
        candidates=dict(candidate_counts),
        corrections=dict(correction_counts),
        masked=masked,
        screened_out=screened_out,
        solutions=tuple(solutions),
    )


_WORKER_CONTEXT: Optional[SweepContext] = None


def _init_worker(ctx: SweepContext) -> None:
    global _WORKER_CONTEXT
    _WORKER_CONTEXT = ctx


def _process_in_worker(task: RowTask) -> RowResult:
    assert _WORKER_CONTEXT is not None
    return process_row(_WORKER_CONTEXT, task)


def run_rows(ctx: SweepContext, tasks: Iterable[RowTask], workers: int = 1) -> Iterator[RowResult]:
    """Process *tasks*, yielding results in task order whatever the worker count."""
    if workers <= 1:
        for task in tasks:
            yield process_row(ctx, task)
        return
    with mp.Pool(workers, initializer=_init_worker, initargs=(ctx,)) as pool:
        yield from pool.imap(_process_in_worker, tasks, chunksize=1)
