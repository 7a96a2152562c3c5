"""
writer.py — Results persistence.

Everything is plain CSV (comma, LF, UTF-8, header row first) so any plotting
tool can consume it. Floats are written with repr(), the shortest text that
parses back to the same value.

  summary.csv                one row per trial, sorted by
                             (surface, oracle, strategy, horizon, noise, trial)
  trace_<trial-id>.csv       one row per sample of the trajectory
  campaign.echo              resolved configuration (YAML)
  plot_<metric>.csv          mean / sample std / n per figure group
  plot_<metric>_by_noise.csv same, split by noise setting
"""

from __future__ import annotations

import csv
import logging
import os
from collections import defaultdict
from dataclasses import astuple, dataclass, fields
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from . import ECHO_FILENAME, PLOT_PREFIX, PROJECT_NAME, SUMMARY_FILENAME, TRACE_PREFIX
from .campaign import echo_text
from .experiment import TrialResult

logger = logging.getLogger(f"{PROJECT_NAME.lower()}.writer")

TRACE_COLUMNS = ("sample_index", "x1", "x2", "observed", "rms", "mean_variance", "fit_seconds")
PLOT_COLUMNS = ("surface", "strategy", "oracle", "mean", "standard_deviation", "n")
SCIENCE_BLIND_LABEL = "SB"

# metric name -> ResultsRow attribute
PLOT_METRICS = {
    "fit_time": "mean_fit_seconds",
    "rms_at_convergence": "e_c",
    "samples_to_convergence": "samples_to_convergence",
    "distance_to_convergence": "d_c",
    "min_position_error": "e_min",
}


class ResultsIOError(OSError):
    """A results file could not be written or read."""

    def __init__(self, path: str, cause: BaseException):
        super().__init__(f"{path}: {cause}")
        self.path = path


class SummaryFormatError(ValueError):
    """summary.csv lacks required columns."""


@dataclass(frozen=True)
class ResultsRow:
    surface: str
    oracle: str
    strategy: str
    horizon: str  # empty for science-blind strategies
    noise: str  # "noisy" or "noiseless"
    trial: int
    seed: int
    samples_taken: int
    e0: Optional[float]
    ef: Optional[float]
    e_c: Optional[float]
    i_c: Optional[int]
    d_c: Optional[float]
    e_min: Optional[float]
    converged: Optional[bool]
    total_fit_seconds: float
    samples_to_convergence: Optional[int] = None
    mean_fit_seconds: float = 0.0
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error and self.e0 is not None

    @property
    def sort_key(self):
        return (self.surface, self.oracle, self.strategy, self.horizon, self.noise, self.trial)

    @property
    def group_label(self) -> str:
        """Figure grouping: snake and spiral pool into one science-blind point."""
        if not self.horizon:
            return SCIENCE_BLIND_LABEL
        return f"{self.strategy}-{self.horizon}"


SUMMARY_COLUMNS = tuple(f.name for f in fields(ResultsRow))
_INT_FIELDS = {"trial", "seed", "samples_taken", "i_c", "samples_to_convergence"}
_FLOAT_FIELDS = {"e0", "ef", "e_c", "d_c", "e_min", "total_fit_seconds", "mean_fit_seconds"}
_BOOL_FIELDS = {"converged"}


# ---------------------------------------------------------------------------
# Formatting
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _parse(name: str, text: str):
    if name in _INT_FIELDS:
        return int(text) if text != "" else None
    if name in _FLOAT_FIELDS:
        return float(text) if text != "" else None
    if name in _BOOL_FIELDS:
        return {"true": True, "false": False}.get(text)
    return text


def _open_csv(path: str):
    try:
        return open(path, "w", newline="", encoding="utf-8")
    except OSError as e:
        raise ResultsIOError(path, e) from e


def _writer(f):
    return csv.writer(f, lineterminator="\n")


# ---------------------------------------------------------------------------
# Rows
# ---------------------------------------------------------------------------


def result_to_row(result: TrialResult) -> ResultsRow:
    cfg = result.config
    rep = result.report
    return ResultsRow(
        surface=cfg.surface.name,
        oracle=cfg.oracle.value,
        strategy=cfg.strategy.value,
        horizon=cfg.horizon.label if cfg.horizon else "",
        noise=cfg.noise_label,
        trial=cfg.trial,
        seed=cfg.seed,
        samples_taken=result.samples_taken,
        e0=rep.e0 if rep else None,
        ef=rep.ef if rep else None,
        e_c=rep.e_c if rep else None,
        i_c=rep.i_c if rep else None,
        d_c=rep.d_c if rep else None,
        e_min=rep.e_min if rep else None,
        converged=rep.converged if rep else None,
        total_fit_seconds=result.total_fit_seconds,
        samples_to_convergence=rep.samples_to_convergence if rep else None,
        mean_fit_seconds=result.mean_fit_seconds,
        error=result.error or "",
    )


def results_to_rows(results: Iterable[TrialResult]) -> List[ResultsRow]:
    """Summary rows in file order."""
    return sorted((result_to_row(r) for r in results), key=lambda row: row.sort_key)


def write_summary(rows: Sequence[ResultsRow], path: str) -> None:
    with _open_csv(path) as f:
        w = _writer(f)
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow([_fmt(v) for v in astuple(row)])


def read_summary(path: str) -> List[ResultsRow]:
    """Parse summary.csv back into ResultsRow values."""
    try:
        with open(path, "r", newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            missing = set(SUMMARY_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                raise SummaryFormatError(f"{path}: missing columns {', '.join(sorted(missing))}")
            return [ResultsRow(**{k: _parse(k, rec[k]) for k in SUMMARY_COLUMNS}) for rec in reader]
    except OSError as e:
        raise ResultsIOError(path, e) from e


def trace_filename(result: TrialResult) -> str:
    return f"{TRACE_PREFIX}{result.trial_id}.csv"


def write_trace(result: TrialResult, path: str) -> int:
    """One row per trajectory sample. Samples taken before the first fit leave
    rms / mean_variance / fit_seconds empty. Returns the row count."""
    by_sample = {rec.sample_index: rec for rec in result.trace.records}
    rows = 0
    with _open_csv(path) as f:
        w = _writer(f)
        w.writerow(TRACE_COLUMNS)
        for sample in result.dataset.rows:
            n = sample.index
            rec = by_sample.get(n)
            x1, x2 = sample.position
            metrics = (rec.rms, rec.mean_variance, rec.fit_seconds) if rec else (None, None, None)
            w.writerow([_fmt(v) for v in (n, x1, x2, sample.value, *metrics)])
            rows += 1
    return rows


def write_results(results: Sequence[TrialResult], out_dir: str, settings: Optional[dict] = None) -> List[ResultsRow]:
    """
    Write summary.csv, one trace CSV per trial and campaign.echo into out_dir.

    Returns:
        The summary rows, in file order
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise ResultsIOError(out_dir, e) from e

    rows = results_to_rows(results)
    summary_path = os.path.join(out_dir, SUMMARY_FILENAME)
    write_summary(rows, summary_path)

    for result in results:
        write_trace(result, os.path.join(out_dir, trace_filename(result)))

    echo_path = os.path.join(out_dir, ECHO_FILENAME)
    try:
        with open(echo_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(echo_text(settings or {}, [r.config for r in results]))
    except OSError as e:
        raise ResultsIOError(echo_path, e) from e

    logger.info(f"Results saved to {out_dir} ({len(rows)} trials)")
    return rows


# ---------------------------------------------------------------------------
# Plot data
# ---------------------------------------------------------------------------


def mean_and_std(values: Sequence[float]):
    """(mean, sample standard deviation); the deviation is 0.0 for a single value."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("no values to aggregate")
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return float(np.mean(arr)), std


def aggregate(rows: Iterable[ResultsRow], attribute: str, by_noise: bool = False) -> List[tuple]:
    """Group successful trials and summarize one metric per group.

    Groups are (surface, [noise,] strategy label, oracle), sorted.
    """
    groups: Dict[tuple, List[float]] = defaultdict(list)
    for row in rows:
        value = getattr(row, attribute)
        if not row.ok or value is None:
            continue
        key = (row.surface, row.noise, row.group_label, row.oracle) if by_noise else (
            row.surface,
            row.group_label,
            row.oracle,
        )
        groups[key].append(float(value))

    table = []
    for key in sorted(groups):
        mean, std = mean_and_std(groups[key])
        table.append((*key, mean, std, len(groups[key])))
    return table


def emit_plot_data(results: Sequence[Union[TrialResult, ResultsRow]], out_dir: str) -> List[str]:
    """Write plot_<metric>.csv and plot_<metric>_by_noise.csv; returns the paths."""
    rows = [r if isinstance(r, ResultsRow) else result_to_row(r) for r in results]
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise ResultsIOError(out_dir, e) from e

    paths = []
    for metric, attribute in PLOT_METRICS.items():
        for by_noise in (False, True):
            suffix = "_by_noise" if by_noise else ""
            path = os.path.join(out_dir, f"{PLOT_PREFIX}{metric}{suffix}.csv")
            header = PLOT_COLUMNS[:1] + ("noise",) + PLOT_COLUMNS[1:] if by_noise else PLOT_COLUMNS
            with _open_csv(path) as f:
                w = _writer(f)
                w.writerow(header)
                for entry in aggregate(rows, attribute, by_noise):
                    w.writerow([_fmt(v) for v in entry])
            paths.append(path)

    skipped = sum(1 for r in rows if not r.ok)
    if skipped:
        logger.warning(f"{skipped} failed trials left out of plot data")
    logger.info(f"Plot data written to {out_dir} ({len(paths)} files)")
    return paths
