"""
Unit tests for terrascout/metrics.py.

The arithmetic cases are exact: values are compared with ==.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from terrascout.metrics import (
    ErrorTrace,
    ShapeError,
    TraceRecord,
    convergence_threshold,
    distance_until_convergence,
    evaluate_trace,
    is_converged,
    min_position_error,
    rms_error,
    samples_until_convergence,
)
from terrascout.surface import GridSpec, PosteriorField, Surface, SurfaceKind, truth_values

PARABOLA = Surface(SurfaceKind.PARABOLA, GridSpec.square(-1.0, 1.0, 0.1))
TOWNSEND = Surface(SurfaceKind.TOWNSEND, GridSpec.square(-1.75, 1.75, 0.1))


def field(means, grid=PARABOLA.grid):
    return PosteriorField(np.asarray(means, dtype=float), np.zeros(len(means)), grid)


def make_trace(errors, first_sample: int = 10) -> ErrorTrace:
    trace = ErrorTrace()
    for i, e in enumerate(errors):
        trace = trace.with_record(
            sample_index=first_sample + i,
            position=(0.0, 0.0),
            observed=0.0,
            rms=e,
            mean_variance=0.0,
            fit_seconds=0.5,
        )
    return trace


# ---------------------------------------------------------------------------
# rms_error
# ---------------------------------------------------------------------------


class TestRMSError:
    def test_perfect_prediction(self):
        assert rms_error(field(truth_values(PARABOLA)), PARABOLA) == 0.0

    def test_constant_offset(self):
        assert rms_error(field(truth_values(PARABOLA) + 0.5), PARABOLA) == pytest.approx(0.5, abs=1e-12)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        means = rng.normal(size=441)
        truth = truth_values(PARABOLA)
        expected = math.sqrt(sum((m - t) ** 2 for m, t in zip(means, truth)) / 441)
        assert rms_error(field(means), PARABOLA) == pytest.approx(expected, abs=1e-12)

    def test_grid_mismatch(self):
        with pytest.raises(ShapeError):
            rms_error(PosteriorField(np.zeros(10), np.zeros(10)), PARABOLA)


# ---------------------------------------------------------------------------
# Convergence
# ---------------------------------------------------------------------------


class TestConvergenceThreshold:
    def test_band_and_threshold(self):
        assert convergence_threshold(1.0, 0.5) == (0.01, 0.51)

    def test_flat_trace(self):
        assert convergence_threshold(0.3, 0.3) == (0.0, 0.3)

    def test_divergent_trial(self):
        e_band, e_c = convergence_threshold(0.5, 1.0)
        assert e_band < 0
        assert e_c < 1.0


class TestSamplesUntilConvergence:
    def test_closest_error(self):
        assert samples_until_convergence([1.0, 0.6, 0.52, 0.505, 0.5], 0.51) == 4

    def test_constant_trace(self):
        assert samples_until_convergence([0.2, 0.2, 0.2], 0.2) == 1

    def test_threshold_below_all(self):
        assert samples_until_convergence([0.9, 0.4, 0.6, 0.45], 0.0) == 2

    def test_accepts_error_trace(self):
        assert samples_until_convergence(make_trace([1.0, 0.6, 0.52, 0.505, 0.5]), 0.51) == 4

    def test_empty(self):
        with pytest.raises(ValueError):
            samples_until_convergence([], 0.1)


class TestDistanceUntilConvergence:
    WAYPOINTS = [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 2.0)]

    def test_two_unit_steps(self):
        assert distance_until_convergence(self.WAYPOINTS, 3) == 2.0

    def test_no_motion(self):
        assert distance_until_convergence(self.WAYPOINTS, 1) == 0.0

    def test_diagonal_chain(self):
        h = 0.1
        chain = [(i * h, i * h) for i in range(8)]
        assert distance_until_convergence(chain, 8) == pytest.approx(7 * h * math.sqrt(2), abs=1e-12)

    def test_monotone(self):
        rng = np.random.default_rng(1)
        walk = [tuple(p) for p in rng.normal(size=(20, 2))]
        distances = [distance_until_convergence(walk, i) for i in range(1, 21)]
        assert distances == sorted(distances)

    def test_beyond_path(self):
        with pytest.raises(ValueError):
            distance_until_convergence(self.WAYPOINTS, 5)


class TestIsConverged:
    def test_settled_tail(self):
        errors = np.array([1.0, 0.6, 0.505, 0.502, 0.5])
        e_band, _ = convergence_threshold(1.0, 0.5)
        assert is_converged(errors, 3, 0.5, e_band)

    def test_excursion_after_convergence(self):
        errors = np.array([1.0, 0.505, 0.7, 0.5])
        e_band, _ = convergence_threshold(1.0, 0.5)
        assert not is_converged(errors, 2, 0.5, e_band)

    def test_divergent_never_converged(self):
        errors = np.array([0.5, 0.8, 1.0])
        e_band, _ = convergence_threshold(0.5, 1.0)
        assert not is_converged(errors, 3, 1.0, e_band)


# ---------------------------------------------------------------------------
# min_position_error
# ---------------------------------------------------------------------------


class TestMinPositionError:
    def test_parabola_truth(self):
        assert min_position_error(field(truth_values(PARABOLA)), PARABOLA) == 0.0

    def test_one_cell_offset(self):
        means = truth_values(PARABOLA).copy()
        means[PARABOLA.grid.ordinal(11, 10)] = -1.0
        assert min_position_error(field(means), PARABOLA) == pytest.approx(0.1, abs=1e-12)

    def test_townsend_corner_minimum(self):
        means = truth_values(TOWNSEND).copy()
        means[0] = means.min() - 1.0
        assert min_position_error(field(means, TOWNSEND.grid), TOWNSEND) == 0.0

    def test_shift_invariance(self):
        rng = np.random.default_rng(2)
        means = rng.normal(size=441)
        a = min_position_error(field(means), PARABOLA)
        assert min_position_error(field(means + 3.0), PARABOLA) == a


# ---------------------------------------------------------------------------
# ErrorTrace / evaluate_trace
# ---------------------------------------------------------------------------


class TestErrorTrace:
    def test_indices_contiguous(self):
        rec = TraceRecord(2, 10, (0.0, 0.0), 0.0, 0.1, 0.0, 0.0)
        with pytest.raises(ValueError, match="contiguous"):
            ErrorTrace((rec,))

    def test_non_finite_rejected(self):
        rec = TraceRecord(1, 10, (0.0, 0.0), 0.0, float("nan"), 0.0, 0.0)
        with pytest.raises(ValueError, match="non-finite"):
            ErrorTrace((rec,))

    def test_fit_time_total(self):
        assert make_trace([0.3, 0.2, 0.1]).total_fit_seconds == 1.5


class TestEvaluateTrace:
    def test_report_fields(self):
        trace = make_trace([1.0, 0.6, 0.52, 0.505, 0.5], first_sample=3)
        # 7 waypoints; trace record i was taken with i + 2 samples collected
        waypoints = [(0.0, float(k)) for k in range(7)]
        report = evaluate_trace(trace, waypoints, field(truth_values(PARABOLA)), PARABOLA)
        assert (report.e0, report.ef) == (1.0, 0.5)
        assert report.e_band == 0.01
        assert report.e_c == 0.51
        assert report.i_c == 4
        assert report.samples_to_convergence == 6
        assert report.d_c == 5.0
        assert report.e_min == 0.0
        assert report.converged
        assert report.e_c == report.ef + report.e_band

    def test_without_posterior(self):
        report = evaluate_trace(make_trace([0.4]), [(0.0, 0.0)] * 10, None, PARABOLA)
        assert math.isnan(report.e_min)
        assert report.i_c == 1
        assert not report.converged
