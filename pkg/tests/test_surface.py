"""
Unit tests for terrascout/surface.py.

Covers:
- GridSpec: tiling validation, cell lookup, exclusion of nodata cells
- evaluate / observe / grid_points / true_minimum on the analytic surfaces
- load_raster / serialize_raster: format, parse errors, round trip
- Dataset and PosteriorField invariants
- SurfaceSpec.build and the built-in catalogue
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from terrascout.surface import (
    BUILTIN_SURFACES,
    AlignmentError,
    Dataset,
    DomainError,
    GridSpec,
    PosteriorField,
    RasterParseError,
    Surface,
    SurfaceError,
    SurfaceKind,
    SurfaceSpec,
    evaluate,
    grid_points,
    load_raster,
    observe,
    serialize_raster,
    true_minimum,
    truth_values,
)

PARABOLA_GRID = GridSpec.square(-1.0, 1.0, 0.1)


def parabola(noise_variance: float = 0.0) -> Surface:
    return Surface(SurfaceKind.PARABOLA, PARABOLA_GRID, noise_variance=noise_variance)


def townsend() -> Surface:
    return Surface(SurfaceKind.TOWNSEND, GridSpec.square(-1.75, 1.75, 0.1))


RASTER_2X2 = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nnodata -9999\n1 2\n3 4\n"


# ---------------------------------------------------------------------------
# GridSpec
# ---------------------------------------------------------------------------


class TestGridSpec:
    def test_parabola_grid_is_21_by_21(self):
        assert PARABOLA_GRID.ncols == 21
        assert PARABOLA_GRID.nrows == 21
        assert PARABOLA_GRID.cell_count == 441

    def test_step_must_tile_domain(self):
        with pytest.raises(SurfaceError, match="whole number"):
            GridSpec(-1.0, 1.0, -1.0, 1.0, 0.3)

    def test_non_positive_step_rejected(self):
        with pytest.raises(SurfaceError):
            GridSpec(0.0, 1.0, 0.0, 1.0, 0.0)

    def test_inverted_bounds_rejected(self):
        with pytest.raises(SurfaceError, match="inverted"):
            GridSpec(1.0, -1.0, -1.0, 1.0, 0.1)

    def test_degenerate_grid_has_one_cell(self):
        grid = GridSpec(0.0, 0.0, 0.0, 0.0, 1.0)
        assert grid.point_count == 1
        assert grid.points == ((0.0, 0.0),)

    def test_cell_of_snaps_lattice_positions(self):
        assert PARABOLA_GRID.cell_of((0.3, 0.0)) == (13, 10)
        assert PARABOLA_GRID.cell_of((-1.0, -1.0)) == (0, 0)

    def test_cell_of_outside_domain(self):
        with pytest.raises(DomainError):
            PARABOLA_GRID.cell_of((2.0, 0.0))

    def test_cell_of_off_lattice(self):
        with pytest.raises(AlignmentError):
            PARABOLA_GRID.cell_of((0.05, 0.0))

    def test_excluded_cells_are_unreachable(self):
        grid = GridSpec(0.0, 2.0, 0.0, 2.0, 1.0, excluded=(4,))
        assert not grid.is_reachable(1, 1)
        assert grid.point_count == 8
        assert (1.0, 1.0) not in grid.points
        with pytest.raises(AlignmentError, match="excluded"):
            grid.cell_of((1.0, 1.0))

    def test_ordinal_skips_excluded_cells(self):
        grid = GridSpec(0.0, 2.0, 0.0, 2.0, 1.0, excluded=(1, 4))
        assert grid.ordinal(0, 0) == 0
        assert grid.ordinal(2, 0) == 1
        assert grid.ordinal(2, 2) == 6
        assert grid.points[grid.ordinal(2, 1)] == (2.0, 1.0)

    def test_all_cells_excluded_rejected(self):
        with pytest.raises(SurfaceError, match="no reachable"):
            GridSpec(0.0, 0.0, 0.0, 0.0, 1.0, excluded=(0,))


# ---------------------------------------------------------------------------
# evaluate / observe / grid_points / true_minimum
# ---------------------------------------------------------------------------


class TestEvaluate:
    def test_parabola_origin(self):
        assert evaluate(parabola(), (0.0, 0.0)) == 0.0

    def test_parabola_corner(self):
        assert evaluate(parabola(), (1.0, 1.0)) == 2.0

    def test_townsend_origin(self):
        assert evaluate(townsend(), (0.0, 0.0)) == -1.0

    def test_out_of_domain(self):
        with pytest.raises(DomainError):
            evaluate(parabola(), (1.5, 0.0))

    def test_parabola_nonnegative_with_unique_zero(self):
        values = truth_values(parabola())
        assert np.all(values >= 0)
        zeros = [p for p, v in zip(PARABOLA_GRID.points, values) if v == 0.0]
        assert zeros == [(0.0, 0.0)]

    def test_truth_values_match_evaluate(self):
        surface = townsend()
        values = truth_values(surface)
        for i in (0, 17, 500, len(values) - 1):
            assert values[i] == pytest.approx(evaluate(surface, surface.grid.points[i]), abs=1e-15)


class TestObserve:
    def test_noiseless_is_exact(self):
        rng = np.random.default_rng(0)
        surface = parabola()
        for r in [(0.0, 0.0), (0.5, -0.3), (1.0, 1.0)]:
            assert observe(surface, r, rng) == evaluate(surface, r)

    def test_noise_statistics(self):
        rng = np.random.default_rng(12345)
        surface = parabola(noise_variance=0.02)
        draws = np.array([observe(surface, (0.0, 0.0), rng) for _ in range(10_000)])
        assert abs(draws.mean()) <= 3 * math.sqrt(0.02 / 10_000)
        assert draws.var(ddof=1) == pytest.approx(0.02, rel=0.2)

    def test_same_stream_same_draws(self):
        surface = parabola(noise_variance=0.02)
        a = [observe(surface, (0.1, 0.2), np.random.default_rng(7)) for _ in range(3)]
        b = [observe(surface, (0.1, 0.2), np.random.default_rng(7)) for _ in range(3)]
        assert a == b


class TestGridPoints:
    def test_parabola_count(self):
        assert len(grid_points(parabola())) == 441

    def test_lunar_6km_count(self):
        surface = Surface(SurfaceKind.PARABOLA, GridSpec.square(-3.0, 3.0, 0.25))
        assert len(grid_points(surface)) == 625

    def test_degenerate_count(self):
        surface = Surface(SurfaceKind.PARABOLA, GridSpec(0.0, 0.0, 0.0, 0.0, 1.0))
        assert len(grid_points(surface)) == 1

    def test_row_major_order(self):
        points = grid_points(Surface(SurfaceKind.PARABOLA, GridSpec.square(0.0, 2.0, 1.0)))
        assert points[:4] == [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (0.0, 1.0)]


class TestTrueMinimum:
    def test_parabola(self):
        assert true_minimum(parabola()) == (0.0, 0.0)

    def test_townsend(self):
        assert true_minimum(townsend()) == (-1.75, -1.75)

    def test_raster_argmin(self):
        surface = load_raster("ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nnodata -9999\n5 5 5\n5 5 -2\n")
        assert true_minimum(surface) == (2.0, 0.0)

    def test_raster_tie_takes_lowest_row_major_index(self):
        surface = load_raster("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nnodata -9999\n0 1\n1 0\n")
        assert true_minimum(surface) == (1.0, 0.0)

    def test_configured_minimum_overrides(self):
        surface = Surface(SurfaceKind.PARABOLA, PARABOLA_GRID, true_min_location=(0.5, 0.5))
        assert true_minimum(surface) == (0.5, 0.5)


# ---------------------------------------------------------------------------
# Raster I/O
# ---------------------------------------------------------------------------


class TestLoadRaster:
    def test_south_west_cell(self):
        surface = load_raster(RASTER_2X2)
        assert evaluate(surface, (0.0, 0.0)) == 3.0
        assert evaluate(surface, (1.0, 1.0)) == 2.0

    def test_grid_matches_header(self):
        surface = load_raster(RASTER_2X2)
        assert surface.grid == GridSpec(0.0, 1.0, 0.0, 1.0, 1.0)

    def test_truth_values_in_grid_order(self):
        assert list(truth_values(load_raster(RASTER_2X2))) == [3.0, 4.0, 1.0, 2.0]

    def test_short_body_reports_line(self):
        with pytest.raises(RasterParseError) as exc:
            load_raster("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nnodata -9999\n1 2\n3\n")
        assert exc.value.line == 8

    def test_missing_row(self):
        with pytest.raises(RasterParseError, match="expected 2 data rows"):
            load_raster("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nnodata -9999\n1 2\n")

    def test_non_numeric_token(self):
        with pytest.raises(RasterParseError) as exc:
            load_raster("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nnodata -9999\n1 x\n3 4\n")
        assert exc.value.line == 7
        assert "'x'" in str(exc.value)

    def test_header_out_of_order(self):
        with pytest.raises(RasterParseError) as exc:
            load_raster("nrows 2\nncols 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nnodata -9999\n1 2\n3 4\n")
        assert exc.value.line == 1

    def test_nodata_value_alias(self):
        surface = load_raster(RASTER_2X2.replace("nodata", "NODATA_value"))
        assert surface.nodata == -9999.0

    def test_nodata_cells_excluded(self):
        surface = load_raster("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\nnodata -9999\n1 -9999\n3 4\n")
        assert surface.grid.excluded == (3,)
        assert len(grid_points(surface)) == 3
        assert list(truth_values(surface)) == [3.0, 4.0, 1.0]
        with pytest.raises(AlignmentError):
            evaluate(surface, (1.0, 1.0))

    def test_round_trip(self):
        rng = np.random.default_rng(3)
        values = rng.normal(size=(4, 5))
        body = "\n".join(" ".join(repr(float(v)) for v in row) for row in values)
        text = f"ncols 5\nnrows 4\nxllcorner -1.0\nyllcorner -0.5\ncellsize 0.25\nnodata -9999\n{body}\n"
        first = load_raster(text)
        second = load_raster(serialize_raster(first))
        assert second.grid == first.grid
        assert second.nodata == first.nodata
        np.testing.assert_array_equal(second.raster_values, first.raster_values)

    def test_serialize_analytic_rejected(self):
        with pytest.raises(SurfaceError):
            serialize_raster(parabola())


# ---------------------------------------------------------------------------
# Dataset / PosteriorField
# ---------------------------------------------------------------------------


class TestDataset:
    def test_appended_is_immutable(self):
        empty = Dataset()
        one = empty.appended((0.0, 0.0), 1.0)
        assert len(empty) == 0
        assert len(one) == 1
        assert one.rows[0].index == 1

    def test_indices_increase_from_one(self):
        ds = Dataset.from_pairs([(0, 0), (0.1, 0), (0.2, 0)], [1, 2, 3])
        assert [s.index for s in ds.rows] == [1, 2, 3]
        np.testing.assert_array_equal(ds.values, [1.0, 2.0, 3.0])
        assert ds.positions.shape == (3, 2)


class TestPosteriorField:
    def test_negative_variances_clamped(self):
        field = PosteriorField(np.zeros(3), np.array([-1e-12, 0.5, -3.0]))
        assert list(field.variances) == [0.0, 0.5, 0.0]

    def test_length_mismatch(self):
        with pytest.raises(SurfaceError):
            PosteriorField(np.zeros(3), np.zeros(2))

    def test_grid_length_checked(self):
        with pytest.raises(SurfaceError):
            PosteriorField(np.zeros(3), np.zeros(3), PARABOLA_GRID)

    def test_lookup_by_position(self):
        grid = GridSpec.square(0.0, 1.0, 1.0)
        field = PosteriorField(np.arange(4.0), np.arange(4.0) / 10, grid)
        assert field.mean_at((1.0, 0.0)) == 1.0
        assert field.variance_at((0.0, 1.0)) == pytest.approx(0.2)


# ---------------------------------------------------------------------------
# SurfaceSpec
# ---------------------------------------------------------------------------


class TestSurfaceSpec:
    def test_builtin_budgets(self):
        assert BUILTIN_SURFACES["parabola"].budget == 219
        assert BUILTIN_SURFACES["townsend"].budget == 219
        assert BUILTIN_SURFACES["lunar_3km"].budget == 83
        assert BUILTIN_SURFACES["lunar_6km"].budget == 311

    def test_noise_toggle(self):
        spec = BUILTIN_SURFACES["parabola"]
        assert spec.build(False).noise_variance == 0.0
        assert spec.build(True).noise_variance == 0.02

    def test_raster_requires_path(self):
        with pytest.raises(SurfaceError, match="raster path"):
            BUILTIN_SURFACES["lunar_3km"].build(False)

    def test_raster_grid_must_match(self, tmp_path):
        path = tmp_path / "small.asc"
        path.write_text(RASTER_2X2)
        spec = SurfaceSpec("small", SurfaceKind.RASTER, GridSpec.square(0.0, 2.0, 1.0), raster_path=str(path))
        with pytest.raises(SurfaceError, match="does not match"):
            spec.build(False)

    def test_raster_build(self, tmp_path):
        path = tmp_path / "small.asc"
        path.write_text(RASTER_2X2)
        spec = SurfaceSpec("small", SurfaceKind.RASTER, raster_path=str(path))
        surface = spec.build(True)
        assert surface.name == "small"
        assert surface.noise_variance == 0.02
        assert evaluate(surface, (1.0, 0.0)) == 4.0

    def test_non_canonical_noise_flag(self):
        assert parabola(0.02).is_canonical
        assert not parabola(0.05).is_canonical
