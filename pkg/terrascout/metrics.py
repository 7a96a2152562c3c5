"""
metrics.py — Convergence metrics over a trial's error trace.

  e_i    global RMS error of the posterior mean against noiseless truth
  Δe     settling band, 0.02 · (e0 - ef)
  e_c    error upon convergence, ef + Δe
  i_c    samples until convergence, argmin_i |e_i - e_c| (first on ties)
  d_c    path length travelled until convergence
  e_min  distance between the true minimum and the posterior-mean argmin

ef is the last trace value. A trial is flagged converged only when e0 > ef
and every e_i from i_c onward stays inside [ef - Δe, ef + Δe].
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from . import PROJECT_NAME
from .surface import Position, PosteriorField, Surface, true_minimum, truth_values

logger = logging.getLogger(f"{PROJECT_NAME.lower()}.metrics")

SETTLING_FRACTION = 0.02


class ShapeError(ValueError):
    """Posterior does not cover the surface grid."""


@dataclass(frozen=True)
class TraceRecord:
    index: int  # 1-based position in the trace
    sample_index: int  # dataset size when the record was taken
    position: Position  # most recently sampled location
    observed: float
    rms: float
    mean_variance: float
    fit_seconds: float


@dataclass(frozen=True)
class ErrorTrace:
    records: Tuple[TraceRecord, ...] = ()

    def __post_init__(self):
        for expected, rec in enumerate(self.records, 1):
            if rec.index != expected:
                raise ValueError(f"trace indices must be contiguous from 1, got {rec.index} at {expected}")
            if not all(math.isfinite(v) for v in (rec.rms, rec.mean_variance, rec.fit_seconds)):
                raise ValueError(f"trace record {rec.index} has non-finite values")

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, item) -> TraceRecord:
        return self.records[item]

    @property
    def errors(self) -> np.ndarray:
        return np.asarray([r.rms for r in self.records], dtype=float)

    @property
    def total_fit_seconds(self) -> float:
        return float(sum(r.fit_seconds for r in self.records))

    def with_record(self, **fields) -> ErrorTrace:
        rec = TraceRecord(index=len(self.records) + 1, **fields)
        return ErrorTrace(self.records + (rec,))


@dataclass(frozen=True)
class ConvergenceReport:
    e0: float
    ef: float
    e_band: float
    e_c: float
    i_c: int
    d_c: float
    e_min: float
    converged: bool
    samples_to_convergence: int  # dataset size at i_c


def rms_error(posterior: PosteriorField, surface: Surface) -> float:
    truth = truth_values(surface)
    if posterior.means.shape != truth.shape:
        raise ShapeError(f"posterior has {posterior.means.size} cells, surface grid has {truth.size}")
    return float(np.sqrt(np.mean((posterior.means - truth) ** 2)))


def convergence_threshold(e0: float, ef: float) -> Tuple[float, float]:
    """(Δe, e_c) with Δe = 0.02·(e0 - ef) and e_c = ef + Δe."""
    e_band = SETTLING_FRACTION * (e0 - ef)
    return e_band, ef + e_band


def samples_until_convergence(trace, e_c: float) -> int:
    """1-based argmin of |e_i - e_c|; accepts an ErrorTrace or a sequence of errors."""
    errors = trace.errors if isinstance(trace, ErrorTrace) else np.asarray(trace, dtype=float)
    if errors.size == 0:
        raise ValueError("empty trace")
    return int(np.argmin(np.abs(errors - e_c))) + 1


def distance_until_convergence(waypoints: Sequence[Position], i_c: int) -> float:
    """Path length over the first i_c waypoints."""
    if i_c > len(waypoints):
        raise ValueError(f"i_c={i_c} exceeds {len(waypoints)} waypoints")
    total = 0.0
    for a, b in zip(waypoints[: i_c - 1], waypoints[1:i_c]):
        total += math.hypot(b[0] - a[0], b[1] - a[1])
    return total


def min_position_error(posterior: PosteriorField, surface: Surface) -> float:
    points = surface.grid.points
    if posterior.means.size != len(points):
        raise ShapeError(f"posterior has {posterior.means.size} cells, surface grid has {len(points)}")
    # first occurrence on ties = lowest row-major index
    guess = points[int(np.argmin(posterior.means))]
    truth = true_minimum(surface)
    return math.hypot(truth[0] - guess[0], truth[1] - guess[1])


def is_converged(errors: np.ndarray, i_c: int, ef: float, e_band: float) -> bool:
    e0 = errors[0]
    if not e0 > ef:
        return False
    tail = errors[i_c - 1 :]
    return bool(np.all((tail >= ef - e_band) & (tail <= ef + e_band)))


def evaluate_trace(
    trace: ErrorTrace,
    waypoints: Sequence[Position],
    posterior: Optional[PosteriorField],
    surface: Surface,
) -> ConvergenceReport:
    """Build the convergence report for a finished (or partial) trial.

    Trace record i was taken with ``sample_index`` samples collected, so the
    distance until convergence covers waypoints 1..sample_index(i_c).
    """
    errors = trace.errors
    e0, ef = float(errors[0]), float(errors[-1])
    e_band, e_c = convergence_threshold(e0, ef)
    i_c = samples_until_convergence(errors, e_c)
    samples = trace[i_c - 1].sample_index
    d_c = distance_until_convergence(waypoints, min(samples, len(waypoints)))
    e_min = min_position_error(posterior, surface) if posterior is not None else float("nan")
    converged = is_converged(errors, i_c, ef, e_band)
    if not converged:
        logger.debug(f"Trace not settled: e0={e0:.4g} ef={ef:.4g} band={e_band:.3g} i_c={i_c}")
    return ConvergenceReport(e0, ef, e_band, e_c, i_c, d_c, e_min, converged, samples)
