"""
Unit tests for terrascout/strategy.py.

Small grids use step 1 from the origin so (col, row) equals the position.
"""

from __future__ import annotations

import numpy as np
import pytest

from terrascout.strategy import (
    AgentState,
    HorizonKind,
    HorizonSpec,
    PolicyError,
    StrategyKind,
    chebyshev_cells,
    horizon_cells,
    next_step,
    random_walk_seed,
    select_target,
    snake_path,
    spiral_path,
)
from terrascout.surface import GridSpec, PosteriorField

GRID_3 = GridSpec.square(0.0, 2.0, 1.0)
GRID_5 = GridSpec.square(0.0, 4.0, 1.0)
PARABOLA_GRID = GridSpec.square(-1.0, 1.0, 0.1)

NN = HorizonSpec.from_name("nn")
LOCAL = HorizonSpec.from_name("local")
GLOBAL = HorizonSpec.from_name("global")


def cells(traj):
    return [(int(x), int(y)) for x, y in traj]


def approx_pos(p):
    return pytest.approx(p, abs=1e-12)


# ---------------------------------------------------------------------------
# Science-blind paths
# ---------------------------------------------------------------------------


class TestSnakePath:
    def test_3x3_order(self):
        expected = [(0, 0), (1, 0), (2, 0), (2, 1), (1, 1), (0, 1), (0, 2), (1, 2), (2, 2)]
        assert cells(snake_path(GRID_3, 1)) == expected

    def test_covers_every_cell_once(self):
        path = snake_path(PARABOLA_GRID, 1)
        assert len(path) == PARABOLA_GRID.point_count
        assert set(path) == set(PARABOLA_GRID.points)

    def test_stride_2_on_5x5(self):
        assert cells(snake_path(GRID_5, 2)) == [(0, 0), (2, 0), (4, 0), (4, 2), (2, 2), (0, 2), (0, 4), (2, 4), (4, 4)]

    def test_parabola_stride_2_has_121_waypoints(self):
        assert len(snake_path(PARABOLA_GRID, 2)) == 121

    def test_skips_excluded_cells(self):
        grid = GridSpec(0.0, 2.0, 0.0, 2.0, 1.0, excluded=(4,))
        assert (1, 1) not in cells(snake_path(grid, 1))
        assert len(snake_path(grid, 1)) == 8

    def test_invalid_step(self):
        with pytest.raises(PolicyError):
            snake_path(GRID_3, 0)


class TestSpiralPath:
    def test_3x3_order(self):
        expected = [(0, 0), (1, 0), (2, 0), (2, 1), (2, 2), (1, 2), (0, 2), (0, 1), (1, 1)]
        assert cells(spiral_path(GRID_3, 1)) == expected

    def test_single_cell(self):
        assert cells(spiral_path(GridSpec(0.0, 0.0, 0.0, 0.0, 1.0), 1)) == [(0, 0)]

    def test_permutation_of_grid(self):
        for grid in (PARABOLA_GRID, GridSpec(0.0, 5.0, 0.0, 2.0, 1.0), GridSpec(0.0, 1.0, 0.0, 6.0, 1.0)):
            path = spiral_path(grid, 1)
            assert len(path) == grid.point_count
            assert set(path) == set(grid.points)

    def test_stride_2_on_5x5(self):
        assert cells(spiral_path(GRID_5, 2)) == [(0, 0), (2, 0), (4, 0), (4, 2), (4, 4), (2, 4), (0, 4), (0, 2), (2, 2)]

    def test_single_row(self):
        assert cells(spiral_path(GridSpec(0.0, 3.0, 0.0, 0.0, 1.0), 1)) == [(0, 0), (1, 0), (2, 0), (3, 0)]


# ---------------------------------------------------------------------------
# Random walk
# ---------------------------------------------------------------------------


class TestRandomWalk:
    def test_single_waypoint(self):
        walk = random_walk_seed(PARABOLA_GRID, (0.0, 0.0), 1, np.random.default_rng(0))
        assert list(walk) == [(0.0, 0.0)]

    def test_moves_are_adjacent_and_in_bounds(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            walk = random_walk_seed(GRID_5, (0.0, 0.0), 10, rng)
            assert len(walk) == 10
            assert walk[0] == (0.0, 0.0)
            for a, b in zip(walk.waypoints, walk.waypoints[1:]):
                assert chebyshev_cells(GRID_5, a, b) == 1

    def test_deterministic(self):
        a = random_walk_seed(PARABOLA_GRID, (-1.0, -1.0), 10, np.random.default_rng(5))
        b = random_walk_seed(PARABOLA_GRID, (-1.0, -1.0), 10, np.random.default_rng(5))
        assert a == b

    def test_invalid_length(self):
        with pytest.raises(PolicyError):
            random_walk_seed(GRID_3, (0.0, 0.0), 0, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# Horizon / policy
# ---------------------------------------------------------------------------


class TestHorizonSpec:
    def test_named_radii(self):
        assert NN.radius_cells == 1
        assert LOCAL.radius_cells == 3
        assert GLOBAL.kind is HorizonKind.GLOBAL

    def test_radius_must_be_positive(self):
        with pytest.raises(PolicyError):
            HorizonSpec(HorizonKind.LOCAL, 0)

    def test_science_blind_flag(self):
        assert StrategyKind.SNAKE.science_blind
        assert not StrategyKind.ACTIVE_LEARNING.science_blind


class TestHorizonCells:
    def test_interior_nearest_neighbor(self):
        assert len(horizon_cells(PARABOLA_GRID, (0.0, 0.0), NN)) == 8

    def test_corner_nearest_neighbor(self):
        assert len(horizon_cells(PARABOLA_GRID, (-1.0, -1.0), NN)) == 3

    def test_interior_local(self):
        assert len(horizon_cells(PARABOLA_GRID, (0.0, 0.0), LOCAL)) == 48

    def test_global_excludes_current_cell(self):
        candidates = horizon_cells(PARABOLA_GRID, (0.0, 0.0), GLOBAL)
        assert len(candidates) == 440
        assert (0.0, 0.0) not in candidates

    def test_row_major_order(self):
        assert cells(horizon_cells(GRID_3, (1.0, 1.0), NN)) == [
            (0, 0), (1, 0), (2, 0), (0, 1), (2, 1), (0, 2), (1, 2), (2, 2),
        ]  # fmt: skip


class TestSelectTarget:
    def field(self, variances):
        return PosteriorField(np.zeros(9), np.asarray(variances, dtype=float), GRID_3)

    def test_argmax(self):
        variances = np.zeros(9)
        variances[[1, 4, 7]] = [0.1, 0.5, 0.2]
        candidates = [(1.0, 0.0), (1.0, 1.0), (1.0, 2.0)]
        assert select_target(self.field(variances), candidates) == (1.0, 1.0)

    def test_ties_take_lowest_row_major_index(self):
        candidates = [(2.0, 2.0), (0.0, 1.0), (2.0, 0.0)]
        assert select_target(self.field(np.ones(9)), candidates) == (2.0, 0.0)

    def test_shift_invariance(self):
        rng = np.random.default_rng(0)
        variances = rng.uniform(size=9)
        candidates = list(GRID_3.points)
        assert select_target(self.field(variances), candidates) == select_target(self.field(variances + 5), candidates)

    def test_candidate_order_irrelevant(self):
        variances = np.arange(9.0)
        candidates = list(GRID_3.points)
        assert select_target(self.field(variances), candidates[::-1]) == (2.0, 2.0)

    def test_empty_candidates(self):
        with pytest.raises(PolicyError):
            select_target(self.field(np.ones(9)), [])

    def test_requires_grid(self):
        with pytest.raises(PolicyError):
            select_target(PosteriorField(np.zeros(9), np.ones(9)), [(0.0, 0.0)])


class TestNextStep:
    def test_straight_move(self):
        assert next_step((0.0, 0.0), (0.3, 0.0), PARABOLA_GRID) == approx_pos((0.1, 0.0))

    def test_diagonal_move(self):
        assert next_step((0.0, 0.0), (0.3, 0.3), PARABOLA_GRID) == approx_pos((0.1, 0.1))

    def test_adjacent_target_reached(self):
        target = PARABOLA_GRID.position(9, 11)
        assert next_step((0.0, 0.0), target, PARABOLA_GRID) == target

    def test_clipped_at_boundary(self):
        assert next_step((-1.0, -1.0), (-1.0, 1.0), PARABOLA_GRID) == approx_pos((-1.0, -0.9))

    def test_ties_take_lowest_row_major_index(self):
        # east neighbor excluded: north-east and south-east are equally close
        grid = GridSpec(0.0, 4.0, 0.0, 4.0, 1.0, excluded=(13,))
        assert next_step((2.0, 2.0), (4.0, 2.0), grid) == (3.0, 1.0)

    def test_repeated_steps_respect_constraint(self):
        pos = PARABOLA_GRID.position(0, 0)
        target = PARABOLA_GRID.position(20, 13)
        steps = 0
        while pos != target and steps < 30:
            nxt = next_step(pos, target, PARABOLA_GRID)
            assert chebyshev_cells(PARABOLA_GRID, pos, nxt) == 1
            pos, steps = nxt, steps + 1
        assert pos == target
        assert steps == 20


class TestAgentState:
    def test_history_tracks_moves(self):
        agent = AgentState.start((0.0, 0.0)).moved_to((1.0, 0.0)).moved_to((1.0, 1.0))
        assert agent.position == (1.0, 1.0)
        assert list(agent.history) == [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0)]
