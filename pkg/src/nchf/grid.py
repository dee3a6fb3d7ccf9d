"""Flat periodic torus grids, quadrature and cutoff functions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import GridError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class GridSpec:
    """Uniform isotropic cell grid on the torus ``[0, side)^dim``.

    Cell ``c`` (a multi-index) sits at ``x = c * h``.
    """

    dim: int
    res: int
    side: float = TWO_PI

    def __post_init__(self):
        if int(self.dim) != self.dim or not 2 <= self.dim <= 4:
            raise GridError(f"dim must be 2, 3 or 4, got {self.dim!r}")
        if int(self.res) != self.res or self.res < 8:
            raise GridError(f"res must be an integer >= 8, got {self.res!r}")
        if not (math.isfinite(self.side) and self.side > 0):
            raise GridError(f"side must be positive and finite, got {self.side!r}")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "res", int(self.res))
        object.__setattr__(self, "side", float(self.side))

    @property
    def h(self) -> float:
        return self.side / self.res

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.res,) * self.dim

    @property
    def n_cells(self) -> int:
        return self.res**self.dim

    @property
    def cell_volume(self) -> float:
        return self.h**self.dim

    @property
    def volume(self) -> float:
        return self.side**self.dim

    def coords(self) -> list[np.ndarray]:
        """Per-axis coordinate arrays broadcast to the full grid shape."""
        x = np.arange(self.res) * self.h
        return list(np.meshgrid(*([x] * self.dim), indexing="ij"))

    def point(self, index) -> np.ndarray:
        return np.asarray(index, dtype=float) * self.h


def pairwise_sum(values) -> float:
    """Sum all entries by a fixed-shape pairwise tree.

    The tree depends only on the number of entries, so the result is
    bit-reproducible regardless of how the values were computed.
    """
    a = np.ascontiguousarray(values, dtype=float).ravel()
    if a.size == 0:
        return 0.0
    while a.size > 1:
        if a.size % 2:
            a = np.append(a, 0.0)
        a = a[0::2] + a[1::2]
    return float(a[0])


def integrate(grid: GridSpec, values) -> float:
    """Midpoint quadrature ``h^n * sum(values)`` over the torus."""
    v = np.asarray(values, dtype=float)
    if v.shape != grid.shape:
        raise GridError(f"field shape {v.shape} does not match grid {grid.shape}")
    bad = ~np.isfinite(v)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise GridError(f"non-finite value at cell {idx}")
    return grid.cell_volume * pairwise_sum(v)


def _wrap(delta, side):
    d = np.abs(delta) % side
    return np.minimum(d, side - d)


def periodic_distance(grid: GridSpec, x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.sqrt(np.sum(_wrap(x - y, grid.side) ** 2)))


def displacement(grid: GridSpec, center) -> list[np.ndarray]:
    """Minimal-image displacement ``x - center`` per axis over the grid."""
    center = np.asarray(center, dtype=float)
    if center.shape != (grid.dim,):
        raise GridError(f"center must have {grid.dim} coordinates")
    out = []
    for x, c in zip(grid.coords(), center):
        d = (x - c) % grid.side
        out.append(np.where(d > grid.side / 2, d - grid.side, d))
    return out


def distance_field(grid: GridSpec, center) -> np.ndarray:
    return np.sqrt(sum(d * d for d in displacement(grid, center)))


@dataclass(frozen=True)
class Cutoff:
    """A cos^2 bump ``phi`` supported in the periodic ball ``B_r(center)``."""

    grid: GridSpec
    center: tuple[float, ...]
    radius: float
    values: np.ndarray = field(repr=False)
    ball: np.ndarray = field(repr=False)

    def gradient_sq(self) -> np.ndarray:
        """Cell-centered ``|grad phi|^2`` from face differences."""
        from .operators import scalar_gradient_sq

        return scalar_gradient_sq(self.grid, self.values)


def make_cutoff(grid: GridSpec, center, r: float) -> Cutoff:
    """``phi = cos^2(pi d / 2r)`` for ``d < r`` and 0 beyond."""
    r = float(r)
    if r <= 2 * grid.h:
        raise GridError(f"cutoff unresolved: r={r} <= 2h={2 * grid.h}")
    if r > grid.side / 2:
        raise GridError(f"cutoff radius {r} exceeds half the domain side")
    d = distance_field(grid, center)
    ball = d < r
    phi = np.where(ball, np.cos(np.pi * d / (2 * r)) ** 2, 0.0)
    return Cutoff(grid, tuple(float(c) for c in center), r, phi, ball)
