"""
strategy.py — Exploration strategies on a grid.

Science-blind paths (no model feedback):
  - snake:   boustrophedon sweep from the minimum corner, x1 fast axis
  - spiral:  rectangular inward spiral from the minimum corner (east, north,
             west, south, then shrink)
Both run on the sublattice of every ``step_cells``-th cell.

Active learning:
  - random_walk_seed:  8-connected random walk for the initial dataset
  - horizon_cells:     candidate cells (Chebyshev neighborhood or global)
  - select_target:     highest predicted variance among candidates
  - next_step:         8-connected neighbor closest to the target

All ties are broken by the lowest row-major grid index.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np

from . import PROJECT_NAME
from .surface import GridSpec, Position, PosteriorField

logger = logging.getLogger(f"{PROJECT_NAME.lower()}.strategy")

# 8-connected moves, (dcol, drow)
NEIGHBOR_OFFSETS = tuple((dc, dr) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dc, dr) != (0, 0))
DEFAULT_SEED_POINTS = 10
LOCAL_RADIUS = 3


class PolicyError(ValueError):
    """The suggestion policy cannot produce a target."""


class StrategyKind(str, Enum):
    SNAKE = "snake"
    SPIRAL = "spiral"
    ACTIVE_LEARNING = "al"

    @property
    def science_blind(self) -> bool:
        return self is not StrategyKind.ACTIVE_LEARNING


class HorizonKind(str, Enum):
    NEAREST_NEIGHBOR = "nn"
    LOCAL = "local"
    GLOBAL = "global"


@dataclass(frozen=True)
class HorizonSpec:
    kind: HorizonKind
    radius_cells: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", HorizonKind(self.kind))
        if self.kind is not HorizonKind.GLOBAL and self.radius_cells < 1:
            raise PolicyError(f"horizon radius must be >= 1, got {self.radius_cells}")

    @classmethod
    def from_name(cls, name: str) -> HorizonSpec:
        kind = HorizonKind(name.lower())
        radius = {HorizonKind.NEAREST_NEIGHBOR: 1, HorizonKind.LOCAL: LOCAL_RADIUS, HorizonKind.GLOBAL: 0}[kind]
        return cls(kind, radius)

    @property
    def label(self) -> str:
        return self.kind.value


@dataclass(frozen=True)
class Trajectory:
    waypoints: Tuple[Position, ...] = ()

    def __len__(self) -> int:
        return len(self.waypoints)

    def __iter__(self):
        return iter(self.waypoints)

    def __getitem__(self, item):
        return self.waypoints[item]

    def extended(self, r: Position) -> Trajectory:
        return Trajectory(self.waypoints + (r,))


@dataclass(frozen=True)
class AgentState:
    position: Position
    history: Trajectory

    @classmethod
    def start(cls, position: Position) -> AgentState:
        return cls(position, Trajectory((position,)))

    def moved_to(self, r: Position) -> AgentState:
        return AgentState(r, self.history.extended(r))


def chebyshev_cells(grid: GridSpec, a: Position, b: Position) -> int:
    """Chebyshev distance between two grid cells, in cells."""
    ca, ra = grid.cell_of(a)
    cb, rb = grid.cell_of(b)
    return max(abs(ca - cb), abs(ra - rb))


# ---------------------------------------------------------------------------
# Science-blind paths
# ---------------------------------------------------------------------------


def _stride(count: int, step_cells: int) -> List[int]:
    return list(range(0, count, step_cells))


def _check_step(step_cells: int) -> None:
    if step_cells < 1:
        raise PolicyError(f"step_cells must be >= 1, got {step_cells}")


def snake_path(grid: GridSpec, step_cells: int = 1) -> Trajectory:
    """Boustrophedon sweep on the strided sublattice, reversing x1 each row."""
    _check_step(step_cells)
    cols = _stride(grid.ncols, step_cells)
    waypoints = []
    for i, row in enumerate(_stride(grid.nrows, step_cells)):
        for col in cols if i % 2 == 0 else reversed(cols):
            if grid.is_reachable(col, row):
                waypoints.append(grid.position(col, row))
    return Trajectory(tuple(waypoints))


def spiral_path(grid: GridSpec, step_cells: int = 1) -> Trajectory:
    """Inward rectangular spiral on the strided sublattice."""
    _check_step(step_cells)
    cols = _stride(grid.ncols, step_cells)
    rows = _stride(grid.nrows, step_cells)
    left, right, bottom, top = 0, len(cols) - 1, 0, len(rows) - 1
    order = []
    while left <= right and bottom <= top:
        order.extend((c, bottom) for c in range(left, right + 1))
        order.extend((right, r) for r in range(bottom + 1, top + 1))
        if bottom < top:
            order.extend((c, top) for c in range(right - 1, left - 1, -1))
        if left < right:
            order.extend((left, r) for r in range(top - 1, bottom, -1))
        left, right, bottom, top = left + 1, right - 1, bottom + 1, top - 1
    waypoints = [
        grid.position(cols[i], rows[j]) for i, j in order if grid.is_reachable(cols[i], rows[j])
    ]
    return Trajectory(tuple(waypoints))


# ---------------------------------------------------------------------------
# Active learning
# ---------------------------------------------------------------------------


def _neighbors(grid: GridSpec, col: int, row: int) -> List[Tuple[int, int]]:
    """Reachable 8-connected neighbors in row-major order."""
    return [(col + dc, row + dr) for dc, dr in NEIGHBOR_OFFSETS if grid.is_reachable(col + dc, row + dr)]


def random_walk_seed(
    grid: GridSpec,
    start: Position,
    n: int = DEFAULT_SEED_POINTS,
    rng: np.random.Generator = None,
) -> Trajectory:
    """n-waypoint random walk from ``start``; each move is a uniformly chosen
    reachable 8-connected neighbor (equivalent to resampling off-grid moves)."""
    if n < 1:
        raise PolicyError(f"random walk needs n >= 1, got {n}")
    if rng is None:
        rng = np.random.default_rng()
    col, row = grid.cell_of(start)
    waypoints = [grid.position(col, row)]
    for _ in range(n - 1):
        options = _neighbors(grid, col, row)
        if options:
            col, row = options[int(rng.integers(len(options)))]
        else:
            logger.debug(f"Seed walk boxed in at cell ({col}, {row}); repeating it")
        waypoints.append(grid.position(col, row))
    return Trajectory(tuple(waypoints))


def horizon_cells(grid: GridSpec, position: Position, spec: HorizonSpec) -> List[Position]:
    """Candidate cells for the policy, row-major, never including ``position``."""
    col, row = grid.cell_of(position)
    if spec.kind is HorizonKind.GLOBAL:
        return [grid.position(c, r) for c, r in grid.cells() if (c, r) != (col, row)]
    k = spec.radius_cells
    cells = []
    for r in range(max(0, row - k), min(grid.nrows - 1, row + k) + 1):
        for c in range(max(0, col - k), min(grid.ncols - 1, col + k) + 1):
            if (c, r) != (col, row) and grid.is_reachable(c, r):
                cells.append(grid.position(c, r))
    return cells


def select_target(posterior: PosteriorField, candidates: Sequence[Position]) -> Position:
    """Candidate with the largest predicted variance (lowest row-major index on ties)."""
    if not candidates:
        raise PolicyError("no candidate cells in the prediction horizon")
    grid = posterior.grid
    if grid is None:
        raise PolicyError("posterior must be attached to a grid to select a target")
    best_key = None
    best = None
    for r in candidates:
        cell = grid.cell_of(r)
        key = (-posterior.variances[grid.ordinal(*cell)], grid.lattice_index(*cell))
        if best_key is None or key < best_key:
            best_key, best = key, r
    return best


def next_step(position: Position, target: Position, grid: GridSpec) -> Position:
    """Reachable 8-connected neighbor of ``position`` closest (Euclidean) to ``target``."""
    col, row = grid.cell_of(position)
    tc, tr = grid.cell_of(target)
    best_key = None
    best = (col, row)
    for c, r in _neighbors(grid, col, row):
        # distances compared in cell units so ties are exact
        key = (math.hypot(c - tc, r - tr), grid.lattice_index(c, r))
        if best_key is None or key < best_key:
            best_key, best = key, (c, r)
    return grid.position(*best)
