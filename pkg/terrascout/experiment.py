"""
experiment.py — Single exploration trials.

A trial:
  1. builds its surface (noise on or off)
  2. plans its strategy (snake / spiral path, or active learning)
  3. constructs its oracle (GP or BNN)
  4. places the agent (path start, or the configured AL start; default the
     grid minimum corner)
  5. seeds the dataset: the first ``seed_points`` path waypoints for
     science-blind strategies, a random walk for active learning
  6. explores until the sample budget: science-blind follows its path; active
     learning fits the oracle, takes the highest-variance cell in the
     prediction horizon and steps to the neighbor closest to it

After seeding and after every further sample the oracle is fit on all pairs
and evaluated over the full grid, giving one trace record (global RMS, mean
variance, fit time) per fit.

Each trial owns three independent random streams spawned from its seed
(observation noise, seed walk, oracle), so results do not depend on what
other trials run concurrently.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, List, Optional

import numpy as np

from . import PROJECT_NAME
from . import bnn as bnn_oracle
from . import gp as gp_oracle
from .bnn import TrainConfig, TrainingError
from .gp import GPNumericalError
from .metrics import ConvergenceReport, ErrorTrace, evaluate_trace, rms_error
from .strategy import (
    DEFAULT_SEED_POINTS,
    AgentState,
    HorizonSpec,
    StrategyKind,
    Trajectory,
    chebyshev_cells,
    horizon_cells,
    next_step,
    random_walk_seed,
    select_target,
    snake_path,
    spiral_path,
)
from .surface import Dataset, GridSpec, Position, PosteriorField, Surface, SurfaceSpec, observe

logger = logging.getLogger(f"{PROJECT_NAME.lower()}.experiment")


class TrialConfigError(ValueError):
    """Inconsistent trial configuration."""


class OracleKind(str, Enum):
    GP = "gp"
    BNN = "bnn"


@dataclass(frozen=True)
class GPSettings:
    iterations: int = gp_oracle.DEFAULT_ITERATIONS
    length_scale: float = gp_oracle.DEFAULT_LENGTH_SCALE
    jitter: float = gp_oracle.DEFAULT_JITTER
    step_size: float = gp_oracle.DEFAULT_STEP_SIZE
    normalize_inputs: bool = True
    warm_start: bool = True


@dataclass(frozen=True)
class BNNSettings:
    train: TrainConfig = field(default_factory=TrainConfig)
    dropout_rate: float = bnn_oracle.DEFAULT_DROPOUT
    l2_weight: float = bnn_oracle.DEFAULT_L2


@dataclass(frozen=True)
class TrialConfig:
    surface: SurfaceSpec
    oracle: OracleKind
    strategy: StrategyKind
    horizon: Optional[HorizonSpec] = None
    step_cells: int = 1
    noise: bool = False
    sample_budget: int = 219
    seed: int = 0
    seed_points: int = DEFAULT_SEED_POINTS
    trial: int = 0
    start: Optional[Position] = None
    gp: GPSettings = field(default_factory=GPSettings)
    bnn: BNNSettings = field(default_factory=BNNSettings)
    measure_time: bool = True

    def __post_init__(self):
        object.__setattr__(self, "oracle", OracleKind(self.oracle))
        object.__setattr__(self, "strategy", StrategyKind(self.strategy))
        if self.seed_points < 1:
            raise TrialConfigError(f"seed_points must be >= 1, got {self.seed_points}")
        if self.sample_budget < self.seed_points:
            raise TrialConfigError(
                f"sample budget ({self.sample_budget}) is smaller than the seed count ({self.seed_points})"
            )
        if self.step_cells < 1:
            raise TrialConfigError(f"step_cells must be >= 1, got {self.step_cells}")
        if self.strategy is StrategyKind.ACTIVE_LEARNING:
            if self.horizon is None:
                raise TrialConfigError("active learning needs a prediction horizon")
            if self.step_cells != 1:
                raise TrialConfigError(f"active learners move one cell per sample, got step_cells={self.step_cells}")
        elif self.horizon is not None:
            raise TrialConfigError(f"{self.strategy.value} strategy takes no prediction horizon")

    @property
    def strategy_label(self) -> str:
        if self.horizon is None:
            return self.strategy.value
        return f"{self.strategy.value}-{self.horizon.label}"

    @property
    def noise_label(self) -> str:
        return "noisy" if self.noise else "noiseless"

    @property
    def trial_id(self) -> str:
        return f"{self.surface.name}-{self.noise_label}-{self.oracle.value}-{self.strategy_label}-t{self.trial}"

    def for_trial(self, trial: int) -> TrialConfig:
        """Replicate ``trial`` of this configuration (seed + trial)."""
        return replace(self, trial=trial, seed=self.seed + trial)


@dataclass(frozen=True)
class TrialResult:
    config: TrialConfig
    trace: ErrorTrace
    trajectory: Trajectory
    report: Optional[ConvergenceReport]
    dataset: Dataset = field(default_factory=Dataset)
    error: Optional[str] = None
    grid: Optional[GridSpec] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def trial_id(self) -> str:
        return self.config.trial_id

    @property
    def samples_taken(self) -> int:
        return len(self.trajectory)

    @property
    def total_fit_seconds(self) -> float:
        return self.trace.total_fit_seconds

    @property
    def mean_fit_seconds(self) -> float:
        return self.total_fit_seconds / len(self.trace) if len(self.trace) else 0.0


@dataclass(frozen=True)
class PolicyStep:
    """One active-learning decision, handed to ``on_step`` observers."""

    position: Position
    posterior: PosteriorField
    candidates: List[Position]
    target: Position
    action: Position


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


class GPOracle:
    def __init__(self, settings: GPSettings, grid: GridSpec):
        self.settings = settings
        self.bounds = grid if settings.normalize_inputs else None
        self.model = None

    def fit(self, dataset: Dataset) -> None:
        init = gp_oracle.default_params(dataset, self.settings.jitter)
        init = gp_oracle.KernelParams(self.settings.length_scale, init.output_scale, init.noise_jitter)
        if self.settings.warm_start and self.model is not None:
            # previous fit competes with the cold start on the grown dataset
            prev = self.model.params
            warm = gp_oracle.KernelParams(prev.length_scale, prev.output_scale, self.settings.jitter)
            init = gp_oracle.best_start(dataset, [init, warm], self.bounds)
        self.model = gp_oracle.fit(
            dataset, init, self.settings.iterations, bounds=self.bounds, step_size=self.settings.step_size
        )

    def predict(self, targets) -> PosteriorField:
        return gp_oracle.predict(self.model, targets)


class BNNOracle:
    def __init__(self, settings: BNNSettings, grid: GridSpec, rng: np.random.Generator):
        self.settings = settings
        self.grid = grid
        self.rng = rng
        self.net = self._fresh()

    def _fresh(self) -> bnn_oracle.NetworkParams:
        return bnn_oracle.init_network(self.rng, self.settings.dropout_rate, self.settings.l2_weight, bounds=self.grid)

    def fit(self, dataset: Dataset) -> None:
        if not self.settings.train.warm_start:
            self.net = self._fresh()
        self.net = bnn_oracle.train(self.net, dataset, self.settings.train, self.rng)

    def predict(self, targets) -> PosteriorField:
        return bnn_oracle.predict_mc(self.net, targets, self.settings.train, self.rng)


def make_oracle(cfg: TrialConfig, grid: GridSpec, rng: np.random.Generator):
    if cfg.oracle is OracleKind.GP:
        return GPOracle(cfg.gp, grid)
    return BNNOracle(cfg.bnn, grid, rng)


# ---------------------------------------------------------------------------
# Trial loop
# ---------------------------------------------------------------------------


def _planned_path(cfg: TrialConfig, grid: GridSpec) -> Trajectory:
    if cfg.strategy is StrategyKind.SNAKE:
        return snake_path(grid, cfg.step_cells)
    return spiral_path(grid, cfg.step_cells)


def _start_position(cfg: TrialConfig, grid: GridSpec) -> Position:
    if cfg.start is None:
        return grid.min_corner
    return grid.position(*grid.cell_of(cfg.start))


class _Recorder:
    """Fits the oracle, evaluates it on the full grid and appends a trace record."""

    def __init__(self, cfg: TrialConfig, surface: Surface, oracle):
        self.cfg = cfg
        self.surface = surface
        self.oracle = oracle
        self.trace = ErrorTrace()
        self.posterior: Optional[PosteriorField] = None

    def update(self, dataset: Dataset) -> PosteriorField:
        t0 = time.perf_counter()
        self.oracle.fit(dataset)
        elapsed = time.perf_counter() - t0 if self.cfg.measure_time else 0.0
        grid = self.surface.grid
        posterior = self.oracle.predict(grid.point_array).on_grid(grid)
        last = dataset.rows[-1]
        self.trace = self.trace.with_record(
            sample_index=len(dataset),
            position=last.position,
            observed=last.value,
            rms=rms_error(posterior, self.surface),
            mean_variance=posterior.mean_variance,
            fit_seconds=elapsed,
        )
        self.posterior = posterior
        logger.debug(f"{self.cfg.trial_id}: n={len(dataset)} rms={self.trace[-1].rms:.5g} fit={elapsed:.3f}s")
        return posterior


def run_trial(cfg: TrialConfig, on_step: Optional[Callable[[PolicyStep], None]] = None) -> TrialResult:
    """Run one trial to its sample budget (or the end of its path)."""
    surface = cfg.surface.build(cfg.noise)
    grid = surface.grid
    obs_seq, walk_seq, oracle_seq = np.random.SeedSequence(cfg.seed).spawn(3)
    obs_rng = np.random.default_rng(obs_seq)
    walk_rng = np.random.default_rng(walk_seq)
    oracle_rng = np.random.default_rng(oracle_seq)

    if cfg.strategy.science_blind:
        path = _planned_path(cfg, grid)
        total = min(cfg.sample_budget, len(path))
        if total < cfg.sample_budget:
            logger.info(f"{cfg.trial_id}: {cfg.strategy.value} path has {len(path)} waypoints, budget {cfg.sample_budget}")
        seed_path = path.waypoints[: min(cfg.seed_points, total)]
    else:
        path = None
        total = cfg.sample_budget
        seed_path = random_walk_seed(grid, _start_position(cfg, grid), cfg.seed_points, walk_rng).waypoints

    logger.info(f"Trial {cfg.trial_id} started (seed={cfg.seed}, budget={total})")
    oracle = make_oracle(cfg, grid, oracle_rng)

    dataset = Dataset()
    agent = AgentState.start(seed_path[0])
    for i, r in enumerate(seed_path):
        if i > 0:
            agent = agent.moved_to(r)
        dataset = dataset.appended(r, observe(surface, r, obs_rng))

    recorder = _Recorder(cfg, surface, oracle)
    error = None
    try:
        posterior = recorder.update(dataset)
        while len(dataset) < total:
            if path is not None:
                r = path[len(dataset)]
            else:
                candidates = horizon_cells(grid, agent.position, cfg.horizon)
                target = select_target(posterior, candidates)
                r = next_step(agent.position, target, grid)
                if on_step is not None:
                    on_step(PolicyStep(agent.position, posterior, candidates, target, r))
            agent = agent.moved_to(r)
            dataset = dataset.appended(r, observe(surface, r, obs_rng))
            posterior = recorder.update(dataset)
    except (GPNumericalError, TrainingError) as e:
        error = f"{type(e).__name__}: {e}"
        logger.warning(f"Trial {cfg.trial_id} aborted after {len(dataset)} samples: {error}")

    report = None
    if len(recorder.trace):
        report = evaluate_trace(recorder.trace, agent.history.waypoints, recorder.posterior, surface)
        logger.info(
            f"Trial {cfg.trial_id} finished: {len(dataset)} samples, ef={report.ef:.5g}, "
            f"i_c={report.i_c}, e_min={report.e_min:.4g}, fit={recorder.trace.total_fit_seconds:.2f}s"
        )
    return TrialResult(cfg, recorder.trace, agent.history, report, dataset, error, grid)


def validate_trace(result: TrialResult) -> List[str]:
    """Constraint violations in a finished trial; empty when the trial is valid.

    Checks that the dataset and trajectory agree and that every active-learning
    move (seed walk included) stays within one cell in Chebyshev distance.
    """
    problems = []
    if len(result.dataset) != len(result.trajectory):
        problems.append(f"dataset has {len(result.dataset)} rows, trajectory {len(result.trajectory)} waypoints")
    if result.config.strategy is StrategyKind.ACTIVE_LEARNING:
        grid = result.grid or result.config.surface.build(False).grid
        wps = result.trajectory.waypoints
        for i in range(1, len(wps)):
            step = chebyshev_cells(grid, wps[i - 1], wps[i])
            if step > 1:
                problems.append(f"move {i} -> {i + 1} spans {step} cells")
    return problems
