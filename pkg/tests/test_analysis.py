"""Tests for solution maps, TOF band detection and band slopes."""

from __future__ import annotations

import math

import pandas as pd
import pytest

from selene.analysis import (
    MAPS,
    BranchReport,
    band_slope,
    branch_census,
    branch_table,
    detect_branches,
    export_maps,
    slope_table,
    solution_maps,
    split_bands,
)
from selene.catalog import Catalog
from selene.errors import InsufficientDataError
from tests.conftest import catalog_of, days, make_solution


def _banded_catalog(alphas, centres_for, per_band=3, spread=2.0):
    """Synthetic catalog: at each alpha, ``per_band`` TOFs around every centre (days)."""
    solutions = []
    index = 0
    for alpha in alphas:
        for centre in centres_for(alpha):
            for k in range(per_band):
                offset = spread * (k / max(per_band - 1, 1) - 0.5)
                solutions.append(make_solution(index, alpha=alpha, tof=days(centre + offset)))
                index += 1
    return catalog_of(solutions)


class TestMaps:
    def test_four_maps_with_equal_rows(self):
        catalog = catalog_of([make_solution(i, tof=1.0 + 0.1 * i) for i in range(6)])
        tables = solution_maps(catalog)
        assert set(tables) == set(MAPS)
        assert {len(t) for t in tables.values()} == {6}
        assert list(tables["tof_dv"].columns) == ["solution_id", "tof_days", "dv_km_s"]
        assert list(tables["alpha_beta"].columns) == ["solution_id", "alpha_rad", "beta"]

    def test_values_in_reporting_units(self):
        s = make_solution(4, alpha=0.25, tof=days(5.0))
        table = solution_maps([s], ["tof_dv"])["tof_dv"]
        assert table.loc[0, "tof_days"] == pytest.approx(5.0)
        assert table.loc[0, "dv_km_s"] == s.dv
        assert table.loc[0, "solution_id"] == 4

    def test_unknown_map(self):
        with pytest.raises(InsufficientDataError, match="unknown map"):
            solution_maps([], ["tof_phase"])

    def test_export_writes_csv(self, tmp_path):
        catalog = catalog_of([make_solution(i, tof=1.0 + 0.1 * i) for i in range(3)])
        paths = export_maps(catalog, tmp_path)
        assert sorted(p.name for p in paths.values()) == sorted(f"{n}.csv" for n in MAPS)
        table = pd.read_csv(paths["tof_alpha"])
        assert len(table) == 3
        assert table["alpha_rad"].tolist() == [0.5, 0.5, 0.5]

    def test_export_empty_catalog(self, tmp_path):
        paths = export_maps(Catalog(), tmp_path, ["tof_beta"])
        table = pd.read_csv(paths["tof_beta"])
        assert len(table) == 0
        assert list(table.columns) == ["solution_id", "tof_days", "beta"]


class TestSplitBands:
    def test_gap_separation(self):
        bands, gaps, intra = split_bands([3.0, 4.0, 5.5, 30.0, 31.0, 60.0])
        assert [(b.tof_min, b.tof_max, b.count) for b in bands] == [(3.0, 5.5, 3), (30.0, 31.0, 2), (60.0, 60.0, 1)]
        assert gaps == [24.5, 29.0]
        assert intra == 1.5

    def test_unsorted_input_and_ids(self):
        bands, _, _ = split_bands([31.0, 3.0, 30.0, 4.0], solution_ids=[10, 11, 12, 13])
        assert bands[0].solution_ids == (11, 13)
        assert bands[1].solution_ids == (12, 10)

    def test_gap_equal_to_threshold_does_not_split(self):
        bands, gaps, _ = split_bands([1.0, 11.0])
        assert len(bands) == 1 and gaps == []

    def test_single_value(self):
        bands, gaps, intra = split_bands([7.0])
        assert len(bands) == 1 and bands[0].width == 0.0
        assert gaps == [] and intra == 0.0

    def test_empty_input(self):
        with pytest.raises(InsufficientDataError):
            split_bands([])


class TestDetectBranches:
    def test_monthly_bands(self):
        catalog = _banded_catalog([0.5], lambda a: [5.0, 33.0, 61.0, 89.0])
        report = detect_branches(catalog, 0.5)
        assert report.band_count == 4
        assert report.median_spacing == pytest.approx(28.0)
        assert all(g > 15.0 for g in report.gaps)
        assert report.max_intra_gap < 10.0
        assert report.solution_count == 12

    def test_no_solutions_at_alpha(self):
        catalog = _banded_catalog([0.5], lambda a: [5.0])
        with pytest.raises(InsufficientDataError):
            detect_branches(catalog, 1.5)

    def test_branch_table(self):
        catalog = _banded_catalog([0.5, 1.0], lambda a: [5.0, 33.0])
        table = branch_table([detect_branches(catalog, a) for a in (0.5, 1.0)])
        assert len(table) == 4
        assert math.isnan(table.loc[0, "gap_before_days"])
        assert table.loc[1, "gap_before_days"] > 15.0


class TestBandSlope:
    def test_linear_drift_recovered(self):
        # band centres drift by 1 day per 0.1 rad
        alphas = [0.1 * k for k in range(10)]
        catalog = _banded_catalog(alphas, lambda a: [5.0 + 10.0 * a, 35.0 + 10.0 * a])
        summary = band_slope([detect_branches(catalog, a) for a in alphas])
        assert len(summary.bands) == 2
        for band in summary.bands:
            assert band.slope == pytest.approx(0.1, rel=1e-9)
            assert band.rms_residual < 1e-9
        assert summary.relative_dispersion == pytest.approx(0.0, abs=1e-9)

    def test_unwraps_across_two_pi(self):
        # the band keeps drifting through alpha = 2*pi and reappears near 0
        true_alphas = [5.8 + 0.1 * k for k in range(8)]
        points = [(a % (2 * math.pi), 5.0 + 10.0 * (a - 5.8)) for a in true_alphas]
        catalog = catalog_of([
            make_solution(i, alpha=a, tof=days(t)) for i, (a, t) in enumerate(points)
        ])
        summary = band_slope([detect_branches(catalog, a) for a in catalog.alphas()])
        band = summary.bands[0]
        assert band.slope == pytest.approx(0.1, rel=1e-6)
        assert band.rms_residual < 1e-6
        assert any(band.wrap_shift)

    def test_missing_band_does_not_shift_the_others(self):
        alphas = [0.1 * k for k in range(10)]

        def centres(a):
            earliest = [] if abs(a - 0.4) < 1e-9 else [5.0 + 10.0 * a]
            return earliest + [35.0 + 10.0 * a, 65.0 + 10.0 * a]

        catalog = _banded_catalog(alphas, centres)
        summary = band_slope([detect_branches(catalog, a) for a in alphas])
        assert [b.alpha_count for b in summary.bands] == [9, 10, 10]
        for band in summary.bands:
            assert band.slope == pytest.approx(0.1, rel=1e-9)
            assert band.rms_residual < 1e-9

    def test_distant_band_starts_a_new_branch(self):
        alphas = [0.1 * k for k in range(4)]
        catalog = _banded_catalog(alphas, lambda a: [5.0 + 10.0 * a] if a < 0.15 else [60.0 + 10.0 * a])
        summary = band_slope([detect_branches(catalog, a) for a in alphas], link_days=15.0)
        assert [b.alpha_count for b in summary.bands] == [2, 2]

    def test_single_alpha_is_insufficient(self):
        catalog = _banded_catalog([0.5], lambda a: [5.0])
        summary = band_slope([detect_branches(catalog, 0.5)])
        assert summary.bands[0].insufficient_data
        assert math.isnan(summary.mean_slope)

    def test_slope_table(self):
        catalog = _banded_catalog([0.1, 0.2, 0.3], lambda a: [5.0 + 10.0 * a])
        table = slope_table(band_slope([detect_branches(catalog, a) for a in (0.1, 0.2, 0.3)]))
        assert list(table.columns) == ["band_index", "alpha_count", "slope_rad_per_day", "intercept_rad", "rms_residual_rad"]
        assert table.loc[0, "alpha_count"] == 3


class TestCensus:
    def test_summary_statistics(self):
        alphas = [0.1 * k for k in range(6)]
        catalog = _banded_catalog(alphas, lambda a: [5.0, 34.0, 63.0, 92.0, 121.0, 134.0 if a < 0.3 else 150.0],
                                  per_band=6)
        census = branch_census(catalog, min_solutions=30)
        assert len(census.populated) == 6
        assert census.modal_band_count == 6
        assert census.median_spacing == pytest.approx(29.0)
        # alphas below 0.3 have an 11-day gap before their last band
        assert census.separated_fraction == pytest.approx(0.5)

    def test_sparse_alphas_are_ignored(self):
        catalog = _banded_catalog([0.5], lambda a: [5.0, 33.0])
        census = branch_census(catalog, min_solutions=30)
        assert census.populated == []
        assert census.modal_band_count is None
        assert math.isnan(census.separated_fraction)

    def test_report_is_plain_data(self):
        report = BranchReport(alpha=0.0, bands=(), gaps=())
        assert report.band_count == 0 and math.isnan(report.median_spacing)
