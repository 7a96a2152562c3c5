"""
surface.py — Benchmark surfaces, grid discretization and observation.

A surface is a scalar field over a planar domain, sampled on a regular grid.
Three kinds are supported:
  - parabola:  y = x1² + x2²
  - townsend:  y = -(cos((x1 - 0.1)·x2)² - x1·sin(3·x1 + x2))
  - raster:    table lookup from a gridded text file (ESRI-style header)

Grid cells are enumerated row-major: x2 is the outer (row) index and x1 the
inner (column) index, starting from the minimum corner. Raster cells equal to
the nodata value are excluded from the reachable grid.

Observation adds zero-mean Gaussian noise with variance ``noise_variance``
drawn from a caller-owned random stream.
"""

from __future__ import annotations

import logging
import math
import os
from bisect import bisect_left
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterator, List, Optional, Tuple

import numpy as np

from . import PROJECT_NAME

logger = logging.getLogger(f"{PROJECT_NAME.lower()}.surface")

Position = Tuple[float, float]

GRID_TOLERANCE = 1e-9  # grid must tile the domain to this many cells
ALIGN_TOLERANCE = 1e-6  # positions snap to a cell within this fraction of a step
CANONICAL_NOISE = (0.0, 0.02)
DEFAULT_NOISE_VARIANCE = 0.02
DEFAULT_NODATA = -9999.0

RASTER_HEADER = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata")
_HEADER_ALIASES = {"nodata_value": "nodata"}


class SurfaceError(ValueError):
    """Invalid surface, grid or position."""


class DomainError(SurfaceError):
    """Position lies outside the surface domain."""


class AlignmentError(SurfaceError):
    """Position does not coincide with a reachable grid cell."""


class RasterParseError(SurfaceError):
    """Malformed raster text. ``line`` is 1-based."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class SurfaceKind(str, Enum):
    PARABOLA = "parabola"
    TOWNSEND = "townsend"
    RASTER = "raster"


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------


def _axis_cells(lo: float, hi: float, step: float, axis: str) -> int:
    span = (hi - lo) / step
    n = round(span)
    if abs(span - n) > GRID_TOLERANCE:
        raise SurfaceError(f"{axis} range [{lo}, {hi}] is not a whole number of {step} steps")
    return int(n)


@dataclass(frozen=True)
class GridSpec:
    """Regular grid over [x1_min, x1_max] × [x2_min, x2_max] with spacing ``step``.

    ``excluded`` holds sorted row-major lattice indices of unreachable cells.
    """

    x1_min: float
    x1_max: float
    x2_min: float
    x2_max: float
    step: float
    excluded: Tuple[int, ...] = ()

    def __post_init__(self):
        if not (self.step > 0 and math.isfinite(self.step)):
            raise SurfaceError(f"grid step must be > 0, got {self.step}")
        if self.x1_max < self.x1_min or self.x2_max < self.x2_min:
            raise SurfaceError(
                f"grid bounds inverted: x1 [{self.x1_min}, {self.x1_max}], x2 [{self.x2_min}, {self.x2_max}]"
            )
        n1 = _axis_cells(self.x1_min, self.x1_max, self.step, "x1")
        n2 = _axis_cells(self.x2_min, self.x2_max, self.step, "x2")
        excluded = tuple(sorted(set(int(i) for i in self.excluded)))
        lattice = (n1 + 1) * (n2 + 1)
        if excluded and (excluded[0] < 0 or excluded[-1] >= lattice):
            raise SurfaceError("excluded cell index outside the grid")
        if len(excluded) == lattice:
            raise SurfaceError("grid has no reachable cells")
        object.__setattr__(self, "excluded", excluded)

    @classmethod
    def square(cls, lo: float, hi: float, step: float) -> GridSpec:
        return cls(lo, hi, lo, hi, step)

    @property
    def ncols(self) -> int:
        return _axis_cells(self.x1_min, self.x1_max, self.step, "x1") + 1

    @property
    def nrows(self) -> int:
        return _axis_cells(self.x2_min, self.x2_max, self.step, "x2") + 1

    @property
    def cell_count(self) -> int:
        """Cells in the full lattice, reachable or not."""
        return self.ncols * self.nrows

    @property
    def point_count(self) -> int:
        """Reachable cells."""
        return self.cell_count - len(self.excluded)

    def lattice_index(self, col: int, row: int) -> int:
        return row * self.ncols + col

    def in_bounds(self, col: int, row: int) -> bool:
        return 0 <= col < self.ncols and 0 <= row < self.nrows

    def is_reachable(self, col: int, row: int) -> bool:
        if not self.in_bounds(col, row):
            return False
        if not self.excluded:
            return True
        idx = self.lattice_index(col, row)
        pos = bisect_left(self.excluded, idx)
        return pos >= len(self.excluded) or self.excluded[pos] != idx

    def ordinal(self, col: int, row: int) -> int:
        """Position of a reachable cell within grid_points order."""
        idx = self.lattice_index(col, row)
        return idx - bisect_left(self.excluded, idx)

    def position(self, col: int, row: int) -> Position:
        return (self.x1_min + col * self.step, self.x2_min + row * self.step)

    def contains(self, r: Position) -> bool:
        tol = ALIGN_TOLERANCE * self.step
        x1, x2 = r
        return (self.x1_min - tol <= x1 <= self.x1_max + tol) and (self.x2_min - tol <= x2 <= self.x2_max + tol)

    def cell_of(self, r: Position) -> Tuple[int, int]:
        """Map a position to its (col, row) cell.

        Raises DomainError outside the domain and AlignmentError when the
        position is off-lattice or on an excluded cell.
        """
        if not self.contains(r):
            raise DomainError(f"position {r} outside domain")
        fc = (r[0] - self.x1_min) / self.step
        fr = (r[1] - self.x2_min) / self.step
        col, row = round(fc), round(fr)
        if abs(fc - col) > ALIGN_TOLERANCE or abs(fr - row) > ALIGN_TOLERANCE:
            raise AlignmentError(f"position {r} is not on a grid cell")
        if not self.is_reachable(col, row):
            raise AlignmentError(f"position {r} is an excluded cell")
        return int(col), int(row)

    def cells(self) -> Iterator[Tuple[int, int]]:
        """Reachable (col, row) pairs in row-major order."""
        for row in range(self.nrows):
            for col in range(self.ncols):
                if self.is_reachable(col, row):
                    yield col, row

    @cached_property
    def points(self) -> Tuple[Position, ...]:
        return tuple(self.position(c, r) for c, r in self.cells())

    @cached_property
    def point_array(self) -> np.ndarray:
        if not self.points:
            return np.empty((0, 2))
        return np.asarray(self.points, dtype=float)

    @property
    def min_corner(self) -> Position:
        """First reachable cell in row-major order."""
        return self.points[0]


# ---------------------------------------------------------------------------
# Surface
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Surface:
    """A scalar field on a grid.

    ``raster_values`` is (nrows, ncols), first row northernmost, as in the
    raster file body.
    """

    kind: SurfaceKind
    grid: GridSpec
    noise_variance: float = 0.0
    raster_values: Optional[np.ndarray] = None
    nodata: Optional[float] = None
    true_min_location: Optional[Position] = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", SurfaceKind(self.kind))
        if not (self.noise_variance >= 0 and math.isfinite(self.noise_variance)):
            raise SurfaceError(f"noise_variance must be >= 0, got {self.noise_variance}")
        if self.kind is SurfaceKind.RASTER:
            if self.raster_values is None:
                raise SurfaceError("raster surface requires raster_values")
            values = np.asarray(self.raster_values, dtype=float)
            if values.shape != (self.grid.nrows, self.grid.ncols):
                raise SurfaceError(
                    f"raster carries {values.size} values, grid needs {self.grid.cell_count}"
                )
            values.setflags(write=False)
            object.__setattr__(self, "raster_values", values)
        elif self.raster_values is not None:
            raise SurfaceError(f"{self.kind.value} surface must not carry raster values")
        if not self.name:
            object.__setattr__(self, "name", self.kind.value)

    @property
    def is_canonical(self) -> bool:
        """True when the noise level is one the benchmarks use (0 or 0.02)."""
        return any(math.isclose(self.noise_variance, v, abs_tol=1e-15) for v in CANONICAL_NOISE)

    def with_noise(self, noise_variance: float) -> Surface:
        return Surface(
            kind=self.kind,
            grid=self.grid,
            noise_variance=noise_variance,
            raster_values=self.raster_values,
            nodata=self.nodata,
            true_min_location=self.true_min_location,
            name=self.name,
        )


def _parabola(x1, x2):
    return x1**2 + x2**2


def _townsend(x1, x2):
    # Parenthesized as published: the sine term sits inside the negation.
    return -(np.cos((x1 - 0.1) * x2) ** 2 - x1 * np.sin(3 * x1 + x2))


_ANALYTIC = {SurfaceKind.PARABOLA: _parabola, SurfaceKind.TOWNSEND: _townsend}


def evaluate(surface: Surface, r: Position) -> float:
    """Noiseless ground truth f(r)."""
    if surface.kind is SurfaceKind.RASTER:
        col, row = surface.grid.cell_of(r)
        return float(surface.raster_values[surface.grid.nrows - 1 - row, col])
    if not surface.grid.contains(r):
        raise DomainError(f"position {r} outside domain of {surface.name}")
    return float(_ANALYTIC[surface.kind](float(r[0]), float(r[1])))


def truth_values(surface: Surface) -> np.ndarray:
    """Ground truth over grid_points, in grid_points order."""
    grid = surface.grid
    if surface.kind is SurfaceKind.RASTER:
        flipped = surface.raster_values[::-1].reshape(-1)
        if not grid.excluded:
            return flipped.copy()
        keep = np.ones(grid.cell_count, dtype=bool)
        keep[list(grid.excluded)] = False
        return flipped[keep]
    pts = grid.point_array
    return np.asarray(_ANALYTIC[surface.kind](pts[:, 0], pts[:, 1]), dtype=float)


def observe(surface: Surface, r: Position, rng: np.random.Generator) -> float:
    """Noisy measurement at r. Exactly evaluate() when the surface is noiseless."""
    value = evaluate(surface, r)
    if surface.noise_variance == 0:
        return value
    return value + float(rng.normal(0.0, math.sqrt(surface.noise_variance)))


def grid_points(surface: Surface) -> List[Position]:
    """Reachable cells, row-major (x2 outer, x1 inner)."""
    return list(surface.grid.points)


def true_minimum(surface: Surface) -> Position:
    if surface.true_min_location is not None:
        return surface.true_min_location
    if surface.kind is SurfaceKind.PARABOLA:
        return (0.0, 0.0)
    if surface.kind is SurfaceKind.TOWNSEND:
        return (-1.75, -1.75)
    # np.argmin returns the first occurrence, i.e. the lowest row-major index
    return surface.grid.points[int(np.argmin(truth_values(surface)))]


# ---------------------------------------------------------------------------
# Raster I/O
# ---------------------------------------------------------------------------


def _parse_number(token: str, line: int, cast=float):
    try:
        value = cast(token)
    except ValueError:
        raise RasterParseError(line, f"non-numeric token {token!r}") from None
    if cast is float and not math.isfinite(value):
        raise RasterParseError(line, f"non-finite value {token!r}")
    return value


def load_raster(
    text: str,
    name: str = "raster",
    noise_variance: float = 0.0,
    true_min_location: Optional[Position] = None,
) -> Surface:
    """Parse raster text into a Raster surface.

    Header (one ``key value`` pair per line, in order): ncols, nrows,
    xllcorner, yllcorner, cellsize, nodata. Then nrows lines of ncols values,
    northernmost row first. The lower-left corner is the position of the
    south-west cell.
    """
    lines = text.splitlines()
    header = {}
    for i, key in enumerate(RASTER_HEADER):
        lineno = i + 1
        if i >= len(lines):
            raise RasterParseError(lineno, f"missing header field {key!r}")
        parts = lines[i].split()
        if len(parts) != 2:
            raise RasterParseError(lineno, f"expected '{key} <value>', got {lines[i]!r}")
        found = parts[0].lower()
        found = _HEADER_ALIASES.get(found, found)
        if found != key:
            raise RasterParseError(lineno, f"expected header field {key!r}, got {parts[0]!r}")
        cast = int if key in ("ncols", "nrows") else float
        header[key] = _parse_number(parts[1], lineno, cast)

    ncols, nrows = header["ncols"], header["nrows"]
    if ncols < 1 or nrows < 1:
        raise RasterParseError(1 if ncols < 1 else 2, "ncols and nrows must be >= 1")
    if header["cellsize"] <= 0:
        raise RasterParseError(5, f"cellsize must be > 0, got {header['cellsize']}")

    rows = []
    body_start = len(RASTER_HEADER)
    for offset, raw in enumerate(lines[body_start:]):
        lineno = body_start + offset + 1
        if not raw.strip():
            continue
        if len(rows) == nrows:
            raise RasterParseError(lineno, f"more than {nrows} data rows")
        tokens = raw.split()
        if len(tokens) != ncols:
            raise RasterParseError(lineno, f"expected {ncols} values, got {len(tokens)}")
        rows.append([_parse_number(t, lineno) for t in tokens])
    if len(rows) != nrows:
        raise RasterParseError(len(lines) + 1, f"expected {nrows} data rows, got {len(rows)}")

    values = np.asarray(rows, dtype=float)
    nodata = header["nodata"]
    # grid order is south-to-north, file order north-to-south
    excluded = np.flatnonzero(values[::-1].reshape(-1) == nodata)

    step = header["cellsize"]
    x1_min, x2_min = header["xllcorner"], header["yllcorner"]
    grid = GridSpec(
        x1_min=x1_min,
        x1_max=x1_min + (ncols - 1) * step,
        x2_min=x2_min,
        x2_max=x2_min + (nrows - 1) * step,
        step=step,
        excluded=tuple(int(i) for i in excluded),
    )
    if len(excluded):
        logger.debug(f"Raster {name}: {len(excluded)} nodata cells excluded")
    return Surface(
        kind=SurfaceKind.RASTER,
        grid=grid,
        noise_variance=noise_variance,
        raster_values=values,
        nodata=nodata,
        true_min_location=true_min_location,
        name=name,
    )


def serialize_raster(surface: Surface) -> str:
    """Inverse of load_raster."""
    if surface.kind is not SurfaceKind.RASTER:
        raise SurfaceError(f"cannot serialize {surface.kind.value} surface as raster")
    grid = surface.grid
    nodata = DEFAULT_NODATA if surface.nodata is None else surface.nodata
    out = [
        f"ncols {grid.ncols}",
        f"nrows {grid.nrows}",
        f"xllcorner {grid.x1_min!r}",
        f"yllcorner {grid.x2_min!r}",
        f"cellsize {grid.step!r}",
        f"nodata {float(nodata)!r}",
    ]
    for row in surface.raster_values:
        out.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(out) + "\n"


def read_raster_file(path: str, **kwargs) -> Surface:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    kwargs.setdefault("name", os.path.splitext(os.path.basename(path))[0])
    return load_raster(text, **kwargs)


# ---------------------------------------------------------------------------
# Dataset / posterior
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Sample:
    index: int  # sample counter, from 1
    position: Position
    value: float


@dataclass(frozen=True)
class Dataset:
    """Ordered training pairs collected by the agent."""

    rows: Tuple[Sample, ...] = ()

    def __post_init__(self):
        for expected, s in enumerate(self.rows, 1):
            if s.index != expected:
                raise SurfaceError(f"dataset indices must run 1..n, got {s.index} at row {expected}")

    def __len__(self) -> int:
        return len(self.rows)

    def appended(self, position: Position, value: float) -> Dataset:
        sample = Sample(len(self.rows) + 1, (float(position[0]), float(position[1])), float(value))
        return Dataset(self.rows + (sample,))

    @property
    def positions(self) -> np.ndarray:
        if not self.rows:
            return np.empty((0, 2))
        return np.asarray([s.position for s in self.rows], dtype=float)

    @property
    def values(self) -> np.ndarray:
        return np.asarray([s.value for s in self.rows], dtype=float)

    @classmethod
    def from_pairs(cls, positions, values) -> Dataset:
        ds = cls()
        for p, v in zip(positions, values):
            ds = ds.appended((float(p[0]), float(p[1])), float(v))
        return ds


@dataclass(frozen=True, eq=False)
class PosteriorField:
    """Predicted mean and variance per target (per grid cell when ``grid`` is set).

    Variances are clamped at zero on construction.
    """

    means: np.ndarray
    variances: np.ndarray
    grid: Optional[GridSpec] = field(default=None)

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float).reshape(-1)
        variances = np.maximum(np.asarray(self.variances, dtype=float).reshape(-1), 0.0)
        if means.shape != variances.shape:
            raise SurfaceError(f"means ({means.size}) and variances ({variances.size}) differ in length")
        if self.grid is not None and means.size != self.grid.point_count:
            raise SurfaceError(f"posterior has {means.size} cells, grid has {self.grid.point_count}")
        means.setflags(write=False)
        variances.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    def __len__(self) -> int:
        return self.means.size

    @property
    def mean_variance(self) -> float:
        return float(np.mean(self.variances))

    def on_grid(self, grid: GridSpec) -> PosteriorField:
        return PosteriorField(self.means, self.variances, grid)

    def _ordinal(self, r: Position) -> int:
        if self.grid is None:
            raise SurfaceError("posterior is not attached to a grid")
        return self.grid.ordinal(*self.grid.cell_of(r))

    def variance_at(self, r: Position) -> float:
        return float(self.variances[self._ordinal(r)])

    def mean_at(self, r: Position) -> float:
        return float(self.means[self._ordinal(r)])


# ---------------------------------------------------------------------------
# Built-in surface catalogue
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SurfaceSpec:
    """Declarative surface description, resolved into a Surface per trial.

    For raster kinds ``grid`` is optional; when given it must match the
    raster header.
    """

    name: str
    kind: SurfaceKind
    grid: Optional[GridSpec] = None
    noise_variance: float = DEFAULT_NOISE_VARIANCE
    raster_path: Optional[str] = None
    true_minimum: Optional[Position] = None
    budget: int = 219
    blind_step: int = 2
    noise: Optional[Tuple[bool, ...]] = None  # per-surface noise toggles

    def build(self, noise: bool) -> Surface:
        variance = self.noise_variance if noise else 0.0
        if self.kind is SurfaceKind.RASTER:
            if not self.raster_path:
                raise SurfaceError(f"surface {self.name!r} needs a raster path")
            surface = read_raster_file(
                self.raster_path, name=self.name, noise_variance=variance, true_min_location=self.true_minimum
            )
            if self.grid is not None and not _same_extent(self.grid, surface.grid):
                raise SurfaceError(
                    f"surface {self.name!r}: raster grid {_describe(surface.grid)} "
                    f"does not match declared {_describe(self.grid)}"
                )
            return surface
        if self.grid is None:
            raise SurfaceError(f"surface {self.name!r} needs a grid")
        return Surface(
            kind=self.kind,
            grid=self.grid,
            noise_variance=variance,
            true_min_location=self.true_minimum,
            name=self.name,
        )


def _same_extent(a: GridSpec, b: GridSpec) -> bool:
    tol = ALIGN_TOLERANCE * min(a.step, b.step)
    return all(
        abs(x - y) <= tol
        for x, y in zip((a.x1_min, a.x1_max, a.x2_min, a.x2_max, a.step), (b.x1_min, b.x1_max, b.x2_min, b.x2_max, b.step))
    )


def _describe(grid: GridSpec) -> str:
    return f"x1 [{grid.x1_min}:{grid.step}:{grid.x1_max}] x2 [{grid.x2_min}:{grid.step}:{grid.x2_max}]"


BUILTIN_SURFACES = {
    "parabola": SurfaceSpec("parabola", SurfaceKind.PARABOLA, GridSpec.square(-1.0, 1.0, 0.1), budget=219, blind_step=2),
    "townsend": SurfaceSpec(
        "townsend", SurfaceKind.TOWNSEND, GridSpec.square(-1.75, 1.75, 0.1), budget=219, blind_step=4
    ),
    "townsend_wide": SurfaceSpec(
        "townsend_wide", SurfaceKind.TOWNSEND, GridSpec.square(-2.5, 2.5, 0.1), budget=219, blind_step=4
    ),
    "lunar_3km": SurfaceSpec(
        "lunar_3km",
        SurfaceKind.RASTER,
        GridSpec.square(-1.5, 1.5, 0.25),
        true_minimum=(1.0, 0.5),
        budget=83,
        blind_step=2,
    ),
    "lunar_6km": SurfaceSpec(
        "lunar_6km",
        SurfaceKind.RASTER,
        GridSpec.square(-3.0, 3.0, 0.25),
        true_minimum=(1.0, 0.5),
        budget=311,
        blind_step=2,
    ),
}
