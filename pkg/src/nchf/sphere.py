"""Round unit sphere target ``S^(L-1)`` in ``R^L``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import operators as ops
from .exceptions import ConfigError, ConstraintViolation, TubularNeighborhoodError
from .grid import GridSpec

TUBE_RADIUS = 0.1


@dataclass(frozen=True)
class SphereTarget:
    ambient_dim: int = 3
    C_N: float = 1.0
    constraint_tol: float = 1e-12

    def __post_init__(self):
        if self.ambient_dim < 2:
            raise ConfigError(f"ambient dimension L must be >= 2, got {self.ambient_dim}")
        if not self.constraint_tol > 0:
            raise ConfigError("constraint_tol must be positive")
        if self.C_N < 1.0:
            # |A| = |DA| = 1 on the unit sphere
            raise ConfigError(f"C_N={self.C_N} is below the unit-sphere bound 1")


@dataclass(frozen=True)
class FlowConstants:
    n: int
    a: float
    b: float
    eps: float
    C_N: float = 1.0

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise ConfigError(f"eps must lie in (0, 1], got {self.eps}")
        if not self.a > 0 or not self.b > 0:
            raise ConfigError("a and b must be positive")
        if not self.C_b > 0:
            raise ConfigError(
                f"C_b = n*b/2 - C_N - 2*C_N^2 = {self.C_b:.6g} <= 0; "
                f"b must exceed {2 * (self.C_N + 2 * self.C_N**2) / self.n:.6g}"
            )

    @property
    def C_b(self) -> float:
        return self.n * self.b / 2 - self.C_N - 2 * self.C_N**2


def project(y) -> np.ndarray:
    """Nearest-point projection ``y / |y|`` along the last axis."""
    y = np.asarray(y, dtype=float)
    norm = np.sqrt(np.sum(y * y, axis=-1, keepdims=True))
    if np.any(norm <= TUBE_RADIUS):
        raise TubularNeighborhoodError(
            f"left tubular neighborhood: |y| = {float(norm.min()):.3g} <= {TUBE_RADIUS}"
        )
    return y / norm


def tangential_project(v, f) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    f = np.asarray(f, dtype=float)
    return v - np.sum(v * f, axis=-1, keepdims=True) * f


def constraint_residual(f) -> float:
    f = np.asarray(f, dtype=float)
    return float(np.max(np.abs(np.sqrt(np.sum(f * f, axis=-1)) - 1.0)))


def check_constraint(f, tol):
    res = constraint_residual(f)
    if not res <= tol:
        raise ConstraintViolation(f"max ||f| - 1| = {res:.3e} exceeds {tol:.1e}")


def second_fundamental_form_term(f, e2, df2, n) -> np.ndarray:
    """Pointwise ``e_2^(n/2-1) |df|^2 f``; the A-term of the tension for spheres."""
    return (ops.cell_sigma(e2, n) * df2)[..., None] * np.asarray(f, dtype=float)


def tension(grid: GridSpec, f, consts: FlowConstants, tol=1e-12, df=None) -> np.ndarray:
    """Tension ``Delta_n^eps f + e_2^(n/2-1) A(f)(df, df)``.

    The normal part is taken as ``-<Delta_n^eps f, f> f``, the discrete
    counterpart of ``e_2^(n/2-1) |df|^2 f``.  This keeps the result exactly
    tangential and equal to minus the discrete energy gradient.
    """
    f = np.asarray(f, dtype=float)
    check_constraint(f, tol)
    lap = ops.n_laplacian_reg(grid, f, consts.eps, consts.n, df)
    return tangential_project(lap, f)


def normal_coefficient(grid: GridSpec, f, eps, n, df=None) -> np.ndarray:
    """``-<Delta_n^eps f, f>`` per cell; approximates ``e_2^(n/2-1)|df|^2``."""
    lap = ops.n_laplacian_reg(grid, f, eps, n, df)
    return -np.sum(lap * np.asarray(f, dtype=float), axis=-1)


def min_admissible_b(n, C_N=1.0) -> float:
    return 2 * (C_N + 2 * C_N**2) / n

