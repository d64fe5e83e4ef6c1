"""Box lattices, lattice-sampled fields and cell-counting measure.

Cells are addressed by their centers ``-extent + (i + 1/2) h`` on each axis.
Sets (balls, superlevel sets, shells) are boolean masks over cells and their
measure is ``count * h**n``, so set algebra is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod
from typing import Sequence

import numpy as np

MAX_DIM = 3
FIELD_TOL = 1e-12


@dataclass(frozen=True)
class Grid:
    n: int
    extent: tuple[float, ...]
    spacing: float

    def __post_init__(self):
        if not 1 <= self.n <= MAX_DIM:
            raise ValueError(f"dimension must be in [1, {MAX_DIM}], got {self.n}")
        ext = tuple(float(e) for e in np.broadcast_to(self.extent, (self.n,)))
        object.__setattr__(self, "extent", ext)
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if any(d < 2 for d in self.dims):
            raise ValueError(f"grid needs at least 2 cells per axis, got {self.dims}")

    @classmethod
    def cube(cls, n: int, extent: float, spacing: float) -> "Grid":
        return cls(n, (float(extent),) * n, float(spacing))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(int(round(2.0 * e / self.spacing)) for e in self.extent)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.dims

    @property
    def size(self) -> int:
        return prod(self.dims)

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.n

    def axes(self) -> list[np.ndarray]:
        h = self.spacing
        return [-e + (np.arange(d) + 0.5) * h for e, d in zip(self.extent, self.dims)]

    def centers(self) -> np.ndarray:
        """Cell centers, shape ``dims + (n,)``."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    def distance_from(self, center: Sequence[float]) -> np.ndarray:
        c = np.asarray(center, dtype=float).reshape(self.n)
        r2 = np.zeros(self.dims)
        for ax, (coords, ci) in enumerate(zip(self.axes(), c)):
            shape = [1] * self.n
            shape[ax] = -1
            r2 = r2 + ((coords - ci) ** 2).reshape(shape)
        return np.sqrt(r2)

    def index_of(self, point: Sequence[float]) -> tuple[int, ...]:
        """Index of the cell containing ``point`` (clipped to the grid)."""
        pt = np.asarray(point, dtype=float).reshape(self.n)
        idx = []
        for p, e, d in zip(pt, self.extent, self.dims):
            i = int(np.floor((p + e) / self.spacing))
            idx.append(min(max(i, 0), d - 1))
        return tuple(idx)

    def center_of(self, index: Sequence[int]) -> np.ndarray:
        return np.array(
            [-e + (i + 0.5) * self.spacing for e, i in zip(self.extent, index)]
        )

    def contains_ball(self, center: Sequence[float], R: float) -> bool:
        """True if the closed ball lies inside the box spanned by the cells."""
        c = np.asarray(center, dtype=float).reshape(self.n)
        for ci, e, d in zip(c, self.extent, self.dims):
            lo, hi = -e, -e + d * self.spacing
            if ci - R < lo or ci + R > hi:
                return False
        return True

    def boundary_mask(self, width: int = 1) -> "RegionMask":
        inner = np.zeros(self.dims, dtype=bool)
        inner[tuple(slice(width, d - width) for d in self.dims)] = True
        return RegionMask(self, ~inner)

    def full_mask(self) -> "RegionMask":
        return RegionMask(self, np.ones(self.dims, dtype=bool))

    def header(self) -> str:
        dims = ",".join(str(d) for d in self.dims)
        ext = ",".join(repr(e) for e in self.extent)
        return f"# dim={self.n} dims={dims} extent={ext} spacing={self.spacing!r}"


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.dims:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid {self.grid.dims}"
            )
        check_range(self.values)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.dims, float(value)))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ScalarField":
        return cls(grid, fn(grid.centers()))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())

    def at(self, point: Sequence[float]) -> float:
        return float(self.values[self.grid.index_of(point)])


def check_range(values: np.ndarray, tol: float = FIELD_TOL) -> None:
    if not np.all(np.isfinite(values)):
        raise ValueError("field contains non-finite values")
    worst = float(np.max(np.abs(values))) if values.size else 0.0
    if worst > 1.0 + tol:
        raise ValueError(f"field value {worst!r} outside [-1, 1]")


@dataclass
class RegionMask:
    grid: Grid
    membership: np.ndarray
    clipped: bool = field(default=False)

    def __post_init__(self):
        self.membership = np.asarray(self.membership, dtype=bool)
        if self.membership.shape != self.grid.dims:
            raise ValueError("mask shape does not match grid")

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.membership))

    def _combine(self, other: "RegionMask", op) -> "RegionMask":
        if other.grid != self.grid:
            raise ValueError("masks live on different grids")
        return RegionMask(
            self.grid, op(self.membership, other.membership), self.clipped or other.clipped
        )

    def __and__(self, other):
        return self._combine(other, np.logical_and)

    def __or__(self, other):
        return self._combine(other, np.logical_or)

    def __sub__(self, other):
        return self._combine(other, lambda a, b: a & ~b)

    def __invert__(self):
        return RegionMask(self.grid, ~self.membership, self.clipped)

    def issubset(self, other: "RegionMask") -> bool:
        return not np.any(self.membership & ~other.membership)

    def touches_boundary(self) -> bool:
        return bool(np.any(self.membership & self.grid.boundary_mask().membership))


def ball_mask(grid: Grid, center: Sequence[float], R: float) -> RegionMask:
    """Cells whose centers lie in the closed ball of radius ``R``.

    ``clipped`` is set when the ball sticks out of the grid box.
    """
    if R < 0:
        raise ValueError("radius must be nonnegative")
    inside = grid.distance_from(center) <= R
    return RegionMask(grid, inside, clipped=not grid.contains_ball(center, R))


def shell_mask(grid: Grid, center: Sequence[float], r_in: float, r_out: float) -> RegionMask:
    """Cells with ``r_in < |x - center| <= r_out``."""
    r = grid.distance_from(center)
    return RegionMask(grid, (r > r_in) & (r <= r_out),
                      clipped=not grid.contains_ball(center, r_out))


def superlevel_mask(field: ScalarField, t: float) -> RegionMask:
    return RegionMask(field.grid, field.values >= t)


def sublevel_mask(field: ScalarField, t: float) -> RegionMask:
    return RegionMask(field.grid, field.values <= t)


def measure(mask: RegionMask) -> float:
    return mask.count * mask.grid.cell_volume


def unit_ball_volume(n: int) -> float:
    from math import gamma, pi

    return pi ** (n / 2) / gamma(n / 2 + 1)
