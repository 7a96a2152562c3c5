"""
parallel.py — Multithreaded campaign execution.

Expands each configuration into ``trials_each`` replicates and fans them out
to a concurrent.futures ThreadPoolExecutor:
  1. Expand configs into trials (seed = base seed + trial index)
  2. Submit every trial to the pool (at most ``parallelism`` run at once)
  3. Collect results as they complete, recording failures instead of raising
  4. Return results ordered by (config index, trial index)

Thread safety:
  - run_trial() is thread-safe (owns its surface, random streams and oracle)
  - Results are placed into pre-assigned slots, so completion order never
    affects the returned list
  - Progress counter uses threading.Lock for accurate reporting
"""

from __future__ import annotations

import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import List, Sequence, Tuple

from . import PROJECT_NAME
from .experiment import TrialConfig, TrialResult, run_trial
from .metrics import ErrorTrace
from .strategy import Trajectory

logger = logging.getLogger(f"{PROJECT_NAME.lower()}.parallel")


class CampaignProgress:
    """Thread-safe progress tracker."""

    def __init__(self, total: int, report_every: int = 10):
        self._lock = threading.Lock()
        self._done = 0
        self._failed = 0
        self.total = total
        self.report_every = report_every

    def tick(self, failed: bool = False) -> None:
        with self._lock:
            self._done += 1
            if failed:
                self._failed += 1
            if self._done % self.report_every == 0 or self._done == self.total:
                logger.info(f"  Progress: {self._done}/{self.total} trials ({self._failed} failed)")

    @property
    def done(self) -> int:
        return self._done

    @property
    def failed(self) -> int:
        return self._failed


def expand_trials(configs: Sequence[TrialConfig], trials_each: int) -> List[Tuple[int, int, TrialConfig]]:
    """(config index, trial index, trial config) for every replicate."""
    if trials_each < 1:
        raise ValueError(f"trials_each must be >= 1, got {trials_each}")
    return [(ci, t, cfg.for_trial(t)) for ci, cfg in enumerate(configs) for t in range(trials_each)]


def _failed_result(cfg: TrialConfig, exc: BaseException) -> TrialResult:
    return TrialResult(cfg, ErrorTrace(), Trajectory(), None, error=f"{type(exc).__name__}: {exc}")


def run_campaign(
    campaign: Sequence[TrialConfig],
    trials_each: int = 3,
    parallelism: int = 1,
) -> List[TrialResult]:
    """
    Run every configuration ``trials_each`` times.

    Args:
        campaign: Trial configurations (their seed is the base seed)
        trials_each: Replicates per configuration
        parallelism: Maximum number of trials running at once

    Returns:
        One TrialResult per replicate, ordered by (config index, trial index)
    """
    t0 = time.time()
    jobs = expand_trials(campaign, trials_each)
    if not jobs:
        return []

    workers = max(1, min(parallelism, len(jobs)))
    progress = CampaignProgress(len(jobs))
    results: List[TrialResult] = [None] * len(jobs)  # type: ignore[list-item]
    logger.info(f"Running {len(jobs)} trials ({len(campaign)} configs × {trials_each}) with {workers} threads...")

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(run_trial, cfg): slot for slot, (_, _, cfg) in enumerate(jobs)}

        for future in as_completed(futures):
            slot = futures[future]
            cfg = jobs[slot][2]
            try:
                result = future.result()
            except Exception as e:
                logger.error(f"Trial {cfg.trial_id} failed: {e}")
                result = _failed_result(cfg, e)
            results[slot] = result
            progress.tick(failed=not result.ok)

    logger.info(f"Campaign complete: {len(results)} trials in {time.time() - t0:.1f}s ({progress.failed} failed)")
    return results
