"""Tests for grid enumeration, candidate evaluation and the row pipeline."""

from __future__ import annotations

import math
import pickle

import pytest

from selene.corrector import CorrectionSettings
from selene.errors import InvalidInputError
from selene.search import (
    AxisSpec,
    BranchMask,
    CandidateStatus,
    GridSpec,
    RowTask,
    SweepContext,
    enumerate_grid,
    evaluate_candidate,
    evaluate_fan,
    indexed_grid,
    iter_row_tasks,
    process_row,
    run_rows,
    screen,
)
from selene.transfer import ConstructionParams
from tests.conftest import catalog_of, days, make_solution


def _tiny_grid(alpha: float, beta: float, tofs) -> GridSpec:
    step = tofs[1] - tofs[0]
    return GridSpec(
        alpha=AxisSpec(alpha, alpha, 1.0),
        beta=AxisSpec(beta, beta, 1.0),
        tof=AxisSpec(tofs[0], tofs[0] + step * (len(tofs) - 1), step),
    )


class TestAxisSpec:
    def test_full_axis_counts(self):
        grid = GridSpec()
        assert grid.shape == (72, 71, 500)
        assert grid.size == 2_556_000

    def test_desk_axis_counts(self):
        alpha = AxisSpec(0.0, 2 * math.pi, math.pi / 12, closed=False)
        beta = AxisSpec(1.4, 1.414, 0.001)
        tof = AxisSpec(math.pi / 25, 10 * math.pi, math.pi / 25)
        assert (alpha.count, beta.count, tof.count) == (24, 15, 250)

    def test_single_point(self):
        assert AxisSpec(1.407, 1.407, 0.001).count == 1
        assert AxisSpec(1.407, 1.407, 0.001, closed=False).count == 1

    def test_empty(self):
        assert AxisSpec(1.0, 0.5, 0.1).count == 0

    def test_values_by_index(self):
        axis = AxisSpec(1.4, 1.414, 0.0002)
        assert axis.value(0) == 1.4
        assert axis.value(5) == 1.4 + 5 * 0.0002

    def test_bad_step(self):
        with pytest.raises(InvalidInputError):
            AxisSpec(0.0, 1.0, 0.0)


class TestEnumeration:
    def test_order_and_index(self):
        grid = GridSpec(AxisSpec(0.0, 1.0, 0.5), AxisSpec(1.40, 1.41, 0.01), AxisSpec(1.0, 3.0, 1.0))
        points = list(enumerate_grid(grid))
        assert len(points) == grid.size == 3 * 2 * 3
        assert points[0] == ConstructionParams(0.0, 1.40, 1.0)
        assert points[1] == ConstructionParams(0.0, 1.40, 2.0)
        assert points[3] == ConstructionParams(0.0, grid.beta.value(1), 1.0)
        for index, p in enumerate(points):
            assert grid.point(index) == p
            assert grid.index(*grid.unravel(index)) == index

    def test_indexed_grid_resumes(self):
        grid = GridSpec(AxisSpec(0.0, 1.0, 0.5), AxisSpec(1.40, 1.41, 0.01), AxisSpec(1.0, 3.0, 1.0))
        tail = list(indexed_grid(grid, start=7))
        assert tail[0][0] == 7
        assert [p for _, p in tail] == list(enumerate_grid(grid))[7:]

    def test_point_out_of_range(self):
        with pytest.raises(InvalidInputError):
            GridSpec().point(GridSpec().size)

    def test_row_tasks_cover_the_remainder(self):
        grid = GridSpec(AxisSpec(0.0, 1.0, 0.5), AxisSpec(1.40, 1.41, 0.01), AxisSpec(1.0, 3.0, 1.0))
        tasks = list(iter_row_tasks(grid, start=4))
        assert tasks[0] == RowTask(0, 1, 1, 3)
        covered = [grid.index(t.ia, t.ib, it) for t in tasks for it in range(t.it_start, t.it_stop)]
        assert covered == list(range(4, grid.size))


class TestCandidates:
    def test_feasible_guess(self, candidates):
        c = candidates[0]
        assert c.status is CandidateStatus.FEASIBLE_GUESS
        assert c.final_state is not None
        assert c.psi_f_norm >= 0.0

    def test_fan_matches_individual_evaluation(self, orbit, candidates):
        p = candidates[0].params
        tofs = [p.tof - 0.04, p.tof - 0.02, p.tof]
        fan = evaluate_fan(p.alpha, p.beta, tofs, orbit)
        for shared, t in zip(fan, tofs):
            single = evaluate_candidate(ConstructionParams(p.alpha, p.beta, t), orbit)
            assert shared.status is single.status
            if single.feasible:
                assert shared.psi_f_norm == pytest.approx(single.psi_f_norm, rel=1e-6, abs=1e-9)

    def test_fan_marks_collisions(self, orbit, collided):
        c = collided[0]
        fan = evaluate_fan(c.params.alpha, c.params.beta, [c.time / 2, c.params.tof], orbit)
        assert fan[0].status is CandidateStatus.FEASIBLE_GUESS
        assert fan[1].status is CandidateStatus.COLLIDED
        assert evaluate_candidate(c.params, orbit).status is CandidateStatus.COLLIDED

    def test_fan_keeps_grid_indices(self, orbit):
        fan = evaluate_fan(0.5, 1.407, [0.5, 0.6], orbit, [10, 11])
        assert [c.grid_index for c in fan] == [10, 11]

    def test_empty_fan(self, orbit):
        assert evaluate_fan(0.5, 1.407, [], orbit) == []

    def test_screen(self, candidates, collided):
        c = candidates[0]
        assert screen(c)
        assert screen(c, c.psi_f_norm * 2 + 1e-300)
        assert not screen(c, c.psi_f_norm / 2)
        assert not screen(collided[0])


class TestBranchMask:
    def test_admits_inside_bands(self):
        catalog = catalog_of([make_solution(i, alpha=0.5, tof=days(t)) for i, t in enumerate([4.0, 5.0, 35.0, 36.0])])
        mask = BranchMask.from_catalog(catalog, gap_threshold_days=10.0, margin_days=2.0)
        assert mask.admits(0.5, 4.5)
        assert mask.admits(0.5, 33.5)
        assert not mask.admits(0.5, 20.0)

    def test_nearest_alpha_wraps(self):
        catalog = catalog_of([make_solution(0, alpha=0.05, tof=days(4.0)), make_solution(1, alpha=3.0, tof=days(40.0))])
        mask = BranchMask.from_catalog(catalog, margin_days=1.0)
        assert mask.admits(2 * math.pi - 0.05, 4.5)
        assert not mask.admits(2 * math.pi - 0.05, 40.0)
        assert mask.admits(3.1, 40.0)

    def test_empty_mask_admits_everything(self):
        assert BranchMask(()).admits(1.0, 99.0)

    def test_picklable(self):
        mask = BranchMask(((0.5, ((4.0, 5.0),)),), 2.0)
        assert pickle.loads(pickle.dumps(mask)) == mask


class TestRows:
    def test_process_row_counts(self, orbit, converged):
        p = converged.params
        grid = _tiny_grid(p.alpha, p.beta, [p.tof - 0.002, p.tof, p.tof + 0.002])
        ctx = SweepContext(orbit, grid, CorrectionSettings())
        result = process_row(ctx, RowTask(0, 0, 0, 3))
        assert (result.start, result.stop) == (0, 3)
        assert sum(result.candidates.values()) == 3
        assert result.solutions
        for s in result.solutions:
            assert s.residual_norm < 1e-8
            assert s.alpha == p.alpha

    def test_mask_skips_points(self, orbit, converged):
        p = converged.params
        grid = _tiny_grid(p.alpha, p.beta, [p.tof - 0.002, p.tof])
        far = BranchMask(((p.alpha, ((500.0, 501.0),)),), 0.0)
        ctx = SweepContext(orbit, grid, CorrectionSettings(), mask=far)
        result = process_row(ctx, RowTask(0, 0, 0, 2))
        assert result.masked == 2
        assert result.solutions == ()

    def test_shared_and_single_arcs_agree(self, orbit, converged):
        p = converged.params
        grid = _tiny_grid(p.alpha, p.beta, [p.tof - 0.002, p.tof, p.tof + 0.002])
        shared = process_row(SweepContext(orbit, grid, CorrectionSettings()), RowTask(0, 0, 0, 3))
        single = process_row(SweepContext(orbit, grid, CorrectionSettings(), shared_arcs=False), RowTask(0, 0, 0, 3))
        assert shared.candidates == single.candidates
        assert [s.grid_index for s in shared.solutions] == [s.grid_index for s in single.solutions]

    def test_run_rows_worker_count_does_not_change_results(self, orbit, converged):
        p = converged.params
        grid = GridSpec(
            alpha=AxisSpec(p.alpha, p.alpha, 1.0),
            beta=AxisSpec(p.beta, p.beta + 1e-4, 1e-4),
            tof=AxisSpec(p.tof - 0.002, p.tof, 0.002),
        )
        ctx = SweepContext(orbit, grid, CorrectionSettings())
        serial = list(run_rows(ctx, iter_row_tasks(grid), workers=1))
        pooled = list(run_rows(ctx, iter_row_tasks(grid), workers=2))
        assert serial == pooled
        assert [r.start for r in serial] == [0, 2]
