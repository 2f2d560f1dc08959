"""Command implementations behind the ``selene`` CLI.

Each ``cmd_*`` function takes already-parsed inputs, does its work through
the library modules, writes its files, and returns a value the front end
can report.  Failures are raised as :class:`SeleneError` subclasses.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import pandas as pd

from selene.analysis import BranchCensus, branch_census, branch_table, export_maps, slope_table
from selene.catalog import Catalog, CatalogHeader, deduplicate, fingerprint
from selene.checkpoint import Checkpoint
from selene.config import RunConfig
from selene.corrector import ARM_FACTOR
from selene.dynamics import PropagationOptions, propagate
from selene.errors import CatalogError, InvalidInputError, SweepInterrupted
from selene.search import BranchMask, SweepContext, iter_row_tasks, run_rows
from selene.transfer import ConstructionParams, OrbitSpec, departure_state, psi_f

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = "checkpoint.jsonl"
CATALOG_FILE = "catalog.jsonl"
SUMMARY_FILE = "summary.json"


@dataclass
class SweepSummary:
    total: int
    processed: int
    candidates: Dict[str, int] = field(default_factory=dict)
    corrections: Dict[str, int] = field(default_factory=dict)
    masked: int = 0
    screened_out: int = 0
    converged: int = 0
    solutions: int = 0
    min_dv_km_s: Optional[float] = None
    tof_range_days: Optional[List[float]] = None
    wall_time_s: float = 0.0

    def to_json(self) -> Dict[str, Any]:
        return asdict(self)

    def describe(self) -> str:
        lines = [
            f"grid points     {self.processed}/{self.total}",
            f"candidates      {_format_counts(self.candidates)}",
            f"corrections     {_format_counts(self.corrections)}",
            f"converged       {self.converged} ({self.solutions} after deduplication)",
        ]
        if self.masked or self.screened_out:
            lines.append(f"skipped         {self.masked} masked, {self.screened_out} screened out")
        if self.min_dv_km_s is not None:
            lo, hi = self.tof_range_days
            lines.append(f"min dv          {self.min_dv_km_s:.4f} km/s")
            lines.append(f"tof range       {lo:.4f} - {hi:.4f} days")
        lines.append(f"wall time       {self.wall_time_s:.1f} s")
        return "\n".join(lines)


def _format_counts(counts: Dict[str, int]) -> str:
    return ", ".join(f"{k}={counts[k]}" for k in sorted(counts)) or "none"


# ------------------------------------------------------------------
# search / resume
# ------------------------------------------------------------------

def sweep_context(config: RunConfig) -> SweepContext:
    mask = None
    options = config.search.branch_mask
    if options is not None:
        reference = Catalog.load(options.catalog)
        mask = BranchMask.from_catalog(reference, options.gap_threshold_days, options.margin_days)
        logger.info("branch mask built from %s (%d alphas)", options.catalog, len(mask.bands))
    return SweepContext(
        orbit=config.orbit,
        grid=config.grid,
        settings=config.correction,
        screen_threshold=config.search.screen_threshold,
        shared_arcs=config.search.shared_arcs,
        mask=mask,
    )


def cmd_search(config: RunConfig) -> SweepSummary:
    """Run a fresh sweep into ``config.output_dir``."""
    out = Path(config.output_dir)
    path = out / CHECKPOINT_FILE
    if path.exists():
        logger.warning("overwriting existing checkpoint %s", path)
    checkpoint = Checkpoint.create(path, config.to_dict(), config.grid.size)
    logger.info("sweeping %d grid points %s with %d worker(s)", config.grid.size, config.grid.shape, config.search.workers)
    return _sweep(config, checkpoint)


def cmd_resume(
    checkpoint_path: Union[str, Path],
    config: Optional[RunConfig] = None,
    workers: Optional[int] = None,
    checkpoint_interval: Optional[int] = None,
) -> SweepSummary:
    """Continue the sweep recorded in *checkpoint_path*.

    Without *config* the run continues with the configuration embedded in the
    checkpoint.  A supplied config must fingerprint identically; only
    non-semantic settings (workers, checkpoint interval, output dir) may differ.
    """
    path = Path(checkpoint_path)
    if path.is_dir():
        path = path / CHECKPOINT_FILE
    expected = config.to_dict() if config is not None else None
    checkpoint = Checkpoint.open(path, expected)
    if config is None:
        config = RunConfig.from_dict(checkpoint.header.config)
    config = config.override(output_dir=str(path.parent), workers=workers, checkpoint_interval=checkpoint_interval)

    if checkpoint.complete:
        summary_path = path.parent / SUMMARY_FILE
        if summary_path.exists() and (path.parent / CATALOG_FILE).exists():
            logger.info("sweep in %s is already complete; nothing to do", path.parent)
            with open(summary_path, "r", encoding="utf-8") as f:
                return SweepSummary(**json.load(f))
        return _finish(config, checkpoint, 0.0)

    logger.info("resuming %s at grid index %d of %d", path, checkpoint.next_index, checkpoint.header.total)
    return _sweep(config, checkpoint)


def _sweep(config: RunConfig, checkpoint: Checkpoint) -> SweepSummary:
    started = time.perf_counter()
    if config.grid.size == 0:
        logger.warning("grid is empty; writing an empty catalog")
        return _finish(config, checkpoint, time.perf_counter() - started)

    ctx = sweep_context(config)
    interval = config.search.checkpoint_interval
    tasks = iter_row_tasks(config.grid, checkpoint.next_index)
    try:
        for result in run_rows(ctx, tasks, config.search.workers):
            checkpoint.absorb(result)
            if checkpoint.pending_candidates >= interval:
                index = checkpoint.commit()
                logger.info(
                    "progress %d/%d (%.1f%%), %d converged",
                    index, checkpoint.header.total, 100.0 * index / checkpoint.header.total, len(checkpoint.solutions),
                )
    except KeyboardInterrupt:
        index = checkpoint.commit()
        raise SweepInterrupted(
            f"sweep interrupted at grid index {index}; resume with 'selene resume {checkpoint.path}'", index,
        ) from None
    checkpoint.commit()
    return _finish(config, checkpoint, time.perf_counter() - started)


def _finish(config: RunConfig, checkpoint: Checkpoint, elapsed: float) -> SweepSummary:
    header = CatalogHeader(constants=config.constants, grid_hash=fingerprint(config.to_dict()["grid"]))
    raw = Catalog(header, config.correction.acceptance)
    raw.extend(sorted(checkpoint.solutions, key=lambda s: s.grid_index))
    catalog = deduplicate(raw, config.analysis.dedup_beta, config.analysis.dedup_tof)

    out = Path(config.output_dir)
    catalog.save(out / CATALOG_FILE)

    counters = checkpoint.counters
    summary = SweepSummary(
        total=checkpoint.header.total,
        processed=checkpoint.next_index,
        candidates=dict(sorted(counters.candidates.items())),
        corrections=dict(sorted(counters.corrections.items())),
        masked=counters.masked,
        screened_out=counters.screened_out,
        converged=len(raw),
        solutions=len(catalog),
        wall_time_s=elapsed,
    )
    if len(catalog):
        summary.min_dv_km_s = min(s.dv for s in catalog)
        summary.tof_range_days = [min(s.tof_days for s in catalog), max(s.tof_days for s in catalog)]
    with open(out / SUMMARY_FILE, "w", encoding="utf-8") as f:
        json.dump(summary.to_json(), f, indent=2)
    logger.info("catalog written to %s (%d solutions)", out / CATALOG_FILE, len(catalog))
    return summary


# ------------------------------------------------------------------
# export-maps / branches
# ------------------------------------------------------------------

def cmd_export(catalog_path: Union[str, Path], out_dir: Union[str, Path], which: Optional[Sequence[str]] = None) -> Dict[str, Path]:
    catalog = Catalog.load(catalog_path)
    paths = export_maps(catalog, out_dir, which)
    logger.info("exported %d map(s) of %d solutions to %s", len(paths), len(catalog), out_dir)
    return paths


def cmd_branches(
    catalog_path: Union[str, Path],
    out_dir: Union[str, Path],
    alphas: Optional[Sequence[float]] = None,
    gap_threshold_days: float = 10.0,
    min_solutions: int = 30,
    separation_days: float = 15.0,
) -> BranchCensus:
    """Band reports per alpha plus per-band slopes, written as CSV."""
    catalog = Catalog.load(catalog_path)
    if alphas is not None:
        known = catalog.alphas()
        alphas = [_match_alpha(a, known) for a in alphas]
    census = branch_census(catalog, gap_threshold_days, min_solutions, separation_days, alphas)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    branch_table(census.reports).to_csv(out / "branches.csv", index=False, float_format="%.17g")
    slope_table(census.slopes()).to_csv(out / "slopes.csv", index=False, float_format="%.17g")
    logger.info(
        "%d alpha(s), %d populated; modal band count %s, median spacing %.2f days",
        len(census.reports), len(census.populated), census.modal_band_count, census.median_spacing,
    )
    return census


def _match_alpha(alpha: float, known: Sequence[float], tol: float = 1e-9) -> float:
    for value in known:
        if abs(value - alpha) <= tol:
            return value
    raise CatalogError(f"no solutions at alpha = {alpha!r}")


# ------------------------------------------------------------------
# propagate
# ------------------------------------------------------------------

@dataclass(frozen=True)
class PropagationReport:
    params: ConstructionParams
    terminated_by: str
    time: float
    psi_f_norm: float
    path: Path


def cmd_propagate(
    params: ConstructionParams,
    orbit: OrbitSpec,
    out_path: Union[str, Path],
    samples: int = 2001,
) -> PropagationReport:
    """Propagate one guess and write ``t, x, y, u, v`` samples as CSV."""
    if samples < 2:
        raise InvalidInputError(f"need at least two samples, got {samples}")
    options = PropagationOptions(arm_radius=ARM_FACTOR * orbit.r_i, samples=samples)
    result = propagate(departure_state(params, orbit), params.tof, orbit.constants, options)
    table = pd.DataFrame(
        [(t, *s.as_tuple()) for t, s in result.dense_samples],
        columns=["t", "x", "y", "u", "v"],
    )
    table["t_days"] = orbit.constants.dimensional_time(1.0) * table["t"]
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out, index=False, float_format="%.17g")

    norm = math.hypot(*psi_f(result.final, orbit))
    if not result.completed:
        logger.warning("arc ends in %s at t = %.6f TU", result.terminated_by.value, result.time)
    logger.info("endpoint |psi_f| = %.3e", norm)
    return PropagationReport(params, result.terminated_by.value, result.time, norm, out)


def params_from_catalog(catalog_path: Union[str, Path], solution_id: int) -> ConstructionParams:
    solution = Catalog.load(catalog_path).get(solution_id)
    return ConstructionParams(solution.alpha, solution.beta, solution.tof)

