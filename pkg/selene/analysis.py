"""Solution-space cartography.

Projects a catalog onto the four (TOF, dv), (TOF, alpha), (alpha, beta) and
(TOF, beta) maps, splits the TOFs found at each departure phase into
gap-separated bands, and fits the alpha-versus-TOF slope of each band.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from selene.catalog import Catalog, TransferSolution
from selene.errors import InsufficientDataError

TWO_PI = 2.0 * math.pi

# map name -> (x column, y column), both in reporting units
MAPS: Dict[str, Tuple[str, str]] = {
    "tof_dv": ("tof_days", "dv_km_s"),
    "tof_alpha": ("tof_days", "alpha_rad"),
    "alpha_beta": ("alpha_rad", "beta"),
    "tof_beta": ("tof_days", "beta"),
}

_COLUMN_SOURCE = {
    "tof_days": "tof_days",
    "dv_km_s": "dv",
    "alpha_rad": "alpha",
    "beta": "beta",
}


# ------------------------------------------------------------------
# Maps
# ------------------------------------------------------------------

def solution_maps(catalog: Iterable[TransferSolution], which: Optional[Sequence[str]] = None) -> Dict[str, pd.DataFrame]:
    """One two-column table (plus ``solution_id``) per requested map."""
    names = list(which) if which else list(MAPS)
    unknown = [n for n in names if n not in MAPS]
    if unknown:
        raise InsufficientDataError(f"unknown map(s): {', '.join(unknown)}; choose from {', '.join(MAPS)}")
    solutions = list(catalog)
    tables = {}
    for name in names:
        x, y = MAPS[name]
        tables[name] = pd.DataFrame(
            {
                "solution_id": pd.Series([s.solution_id for s in solutions], dtype="int64"),
                x: pd.Series([getattr(s, _COLUMN_SOURCE[x]) for s in solutions], dtype="float64"),
                y: pd.Series([getattr(s, _COLUMN_SOURCE[y]) for s in solutions], dtype="float64"),
            },
            columns=["solution_id", x, y],
        )
    return tables


def export_maps(catalog: Catalog, out_dir: Union[str, Path], which: Optional[Sequence[str]] = None) -> Dict[str, Path]:
    """Write the map tables as ``<name>.csv`` under *out_dir*; empty catalogs give header-only files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, table in solution_maps(catalog, which).items():
        path = out / f"{name}.csv"
        table.to_csv(path, index=False, float_format="%.17g")
        paths[name] = path
    return paths


# ------------------------------------------------------------------
# Branches
# ------------------------------------------------------------------

@dataclass(frozen=True)
class Band:
    """A gap-separated cluster of TOFs (days) at one alpha."""

    tof_min: float
    tof_max: float
    count: int
    center: float
    solution_ids: Tuple[int, ...] = ()

    @property
    def width(self) -> float:
        return self.tof_max - self.tof_min


@dataclass(frozen=True)
class BranchReport:
    alpha: float
    bands: Tuple[Band, ...]
    gaps: Tuple[float, ...]
    max_intra_gap: float = 0.0

    @property
    def band_count(self) -> int:
        return len(self.bands)

    @property
    def spacings(self) -> Tuple[float, ...]:
        """Centre-to-centre distances between consecutive bands (days)."""
        centers = [b.center for b in self.bands]
        return tuple(b - a for a, b in zip(centers, centers[1:]))

    @property
    def median_spacing(self) -> float:
        return float(np.median(self.spacings)) if self.spacings else math.nan

    @property
    def solution_count(self) -> int:
        return sum(b.count for b in self.bands)


def split_bands(
    tofs_days: Sequence[float],
    gap_threshold_days: float = 10.0,
    solution_ids: Optional[Sequence[int]] = None,
) -> Tuple[List[Band], List[float], float]:
    """Split sorted TOFs wherever consecutive values are more than the threshold apart.

    Returns ``(bands, gaps, max_intra_gap)``.
    """
    if not gap_threshold_days > 0.0:
        raise InsufficientDataError("gap threshold must be positive")
    if len(tofs_days) == 0:
        raise InsufficientDataError("no TOFs to split")
    ids = list(solution_ids) if solution_ids is not None else list(range(len(tofs_days)))
    order = np.argsort(np.asarray(tofs_days, dtype=float), kind="stable")
    tofs = np.asarray(tofs_days, dtype=float)[order]
    ordered_ids = [ids[i] for i in order]

    diffs = np.diff(tofs)
    cuts = np.flatnonzero(diffs > gap_threshold_days) + 1
    bounds = [0, *cuts.tolist(), len(tofs)]
    bands = []
    for lo, hi in zip(bounds, bounds[1:]):
        chunk = tofs[lo:hi]
        bands.append(Band(
            tof_min=float(chunk[0]),
            tof_max=float(chunk[-1]),
            count=int(hi - lo),
            center=float(np.mean(chunk)),
            solution_ids=tuple(ordered_ids[lo:hi]),
        ))
    gaps = [float(diffs[c - 1]) for c in cuts]
    intra = diffs[diffs <= gap_threshold_days]
    return bands, gaps, float(intra.max()) if intra.size else 0.0


def detect_branches(catalog: Catalog, alpha: float, gap_threshold_days: float = 10.0) -> BranchReport:
    """Band decomposition of the TOFs found at departure phase *alpha*."""
    members = catalog.at_alpha(alpha)
    if not members:
        raise InsufficientDataError(f"no solutions at alpha = {alpha!r}")
    bands, gaps, intra = split_bands(
        [s.tof_days for s in members], gap_threshold_days, [s.solution_id for s in members],
    )
    return BranchReport(alpha=members[0].alpha, bands=tuple(bands), gaps=tuple(gaps), max_intra_gap=intra)


# ------------------------------------------------------------------
# Band slopes
# ------------------------------------------------------------------

@dataclass(frozen=True)
class BandSlope:
    band_index: int
    alpha_count: int
    slope: Optional[float] = None         # rad/day
    intercept: Optional[float] = None     # rad
    rms_residual: Optional[float] = None  # rad
    wrap_shift: Tuple[int, ...] = ()      # 2*pi multiples added per point

    @property
    def insufficient_data(self) -> bool:
        return self.slope is None


@dataclass(frozen=True)
class SlopeSummary:
    bands: Tuple[BandSlope, ...]

    @property
    def slopes(self) -> List[float]:
        return [b.slope for b in self.bands if b.slope is not None]

    @property
    def mean_slope(self) -> float:
        return float(np.mean(self.slopes)) if self.slopes else math.nan

    @property
    def dispersion(self) -> float:
        """Standard deviation of the fitted slopes."""
        return float(np.std(self.slopes)) if len(self.slopes) >= 2 else math.nan

    @property
    def relative_dispersion(self) -> float:
        mean = self.mean_slope
        if len(self.slopes) < 2 or mean == 0.0:
            return math.nan
        return self.dispersion / abs(mean)


def band_slope(reports: Sequence[BranchReport], link_days: float = 15.0) -> SlopeSummary:
    """Least-squares slope of alpha against band-centre TOF, per branch.

    Bands are linked into branches by walking the reports in circular alpha
    order, starting after the widest alpha gap, and attaching each band to
    the branch whose latest centre is nearest (within *link_days*).  A band
    with no branch in reach starts a new one, so a branch missing at one
    alpha does not shift the others.  alpha is unwrapped by adding 2*pi to
    every point below a seam, with the seam chosen to minimise the fit
    residual.
    """
    chains = _link_bands(reports, link_days)
    return SlopeSummary(tuple(_fit_band(k, points) for k, points in enumerate(chains)))


def _link_bands(reports: Sequence[BranchReport], link_days: float) -> List[List[Tuple[float, float]]]:
    ordered = sorted((r for r in reports if r.band_count), key=lambda r: r.alpha)
    if not ordered:
        return []
    alphas = [r.alpha for r in ordered]
    gaps = [b - a for a, b in zip(alphas, alphas[1:])] + [alphas[0] + TWO_PI - alphas[-1]]
    start = (int(np.argmax(gaps)) + 1) % len(ordered)
    ordered = ordered[start:] + ordered[:start]

    # each chain: (walk position of its first band, its first centre, [(centre, alpha), ...])
    chains: List[Tuple[int, float, List[Tuple[float, float]]]] = []
    for position, report in enumerate(ordered):
        pairs = sorted(
            (abs(band.center - chain[2][-1][0]), b, c)
            for b, band in enumerate(report.bands)
            for c, chain in enumerate(chains)
        )
        band_to_chain: Dict[int, int] = {}
        taken = set()
        for distance, b, c in pairs:
            if distance > link_days or b in band_to_chain or c in taken:
                continue
            band_to_chain[b] = c
            taken.add(c)
        for b, band in enumerate(report.bands):
            if b in band_to_chain:
                chains[band_to_chain[b]][2].append((band.center, report.alpha))
            else:
                chains.append((position, band.center, [(band.center, report.alpha)]))
    chains.sort(key=lambda chain: (chain[0], chain[1]))
    return [points for _, _, points in chains]


def _fit_band(k: int, points: List[Tuple[float, float]]) -> BandSlope:
    alphas = sorted({a for _, a in points})
    if len(alphas) < 2:
        return BandSlope(band_index=k, alpha_count=len(alphas))
    t = np.array([p[0] for p in points])
    a = np.array([p[1] for p in points])
    best = None
    for seam in [None, *alphas[1:]]:
        shift = np.zeros(len(a), dtype=int) if seam is None else (a < seam).astype(int)
        unwrapped = a + TWO_PI * shift
        slope, intercept = np.polyfit(t, unwrapped, 1)
        rms = float(np.sqrt(np.mean((unwrapped - (slope * t + intercept)) ** 2)))
        if best is None or rms < best[0] - 1e-15:
            best = (rms, float(slope), float(intercept), shift)
    rms, slope, intercept, shift = best
    return BandSlope(
        band_index=k,
        alpha_count=len(alphas),
        slope=slope,
        intercept=intercept,
        rms_residual=rms,
        wrap_shift=tuple(int(s) for s in shift),
    )


# ------------------------------------------------------------------
# Census over all alphas
# ------------------------------------------------------------------

@dataclass(frozen=True)
class BranchCensus:
    reports: Tuple[BranchReport, ...]
    min_solutions: int
    separation_days: float

    @property
    def populated(self) -> List[BranchReport]:
        return [r for r in self.reports if r.solution_count >= self.min_solutions]

    @property
    def modal_band_count(self) -> Optional[int]:
        counts = Counter(r.band_count for r in self.populated)
        if not counts:
            return None
        # ties resolved towards the smaller count
        return min(counts, key=lambda c: (-counts[c], c))

    @property
    def median_spacing(self) -> float:
        spacings = [s for r in self.populated for s in r.spacings]
        return float(np.median(spacings)) if spacings else math.nan

    @property
    def separated_fraction(self) -> float:
        """Share of populated alphas whose every inter-band gap exceeds ``separation_days``."""
        populated = self.populated
        if not populated:
            return math.nan
        good = sum(1 for r in populated if all(g > self.separation_days for g in r.gaps))
        return good / len(populated)

    def slopes(self) -> SlopeSummary:
        return band_slope(self.populated)


def branch_census(
    catalog: Catalog,
    gap_threshold_days: float = 10.0,
    min_solutions: int = 30,
    separation_days: float = 15.0,
    alphas: Optional[Sequence[float]] = None,
) -> BranchCensus:
    chosen = catalog.alphas() if alphas is None else list(alphas)
    reports = tuple(detect_branches(catalog, a, gap_threshold_days) for a in chosen)
    return BranchCensus(reports, min_solutions, separation_days)


def branch_table(reports: Sequence[BranchReport]) -> pd.DataFrame:
    rows = [
        {
            "alpha_rad": r.alpha,
            "band_index": k,
            "tof_min_days": b.tof_min,
            "tof_max_days": b.tof_max,
            "count": b.count,
            "center_days": b.center,
            "gap_before_days": r.gaps[k - 1] if k > 0 else math.nan,
        }
        for r in reports
        for k, b in enumerate(r.bands)
    ]
    columns = ["alpha_rad", "band_index", "tof_min_days", "tof_max_days", "count", "center_days", "gap_before_days"]
    return pd.DataFrame(rows, columns=columns)


def slope_table(summary: SlopeSummary) -> pd.DataFrame:
    rows = [
        {
            "band_index": b.band_index,
            "alpha_count": b.alpha_count,
            "slope_rad_per_day": b.slope if b.slope is not None else math.nan,
            "intercept_rad": b.intercept if b.intercept is not None else math.nan,
            "rms_residual_rad": b.rms_residual if b.rms_residual is not None else math.nan,
        }
        for b in summary.bands
    ]
    columns = ["band_index", "alpha_count", "slope_rad_per_day", "intercept_rad", "rms_residual_rad"]
    return pd.DataFrame(rows, columns=columns)
