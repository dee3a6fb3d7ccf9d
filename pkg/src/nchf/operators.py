"""Staggered finite-difference operators on the periodic grid.

Maps are arrays of shape ``grid.shape + (L,)``.  Face quantities carry a
leading axis of length ``dim``: entry ``[i][c]`` lives on the face between
cell ``c`` and ``c + e_i``.

Conventions
-----------
* ``D_i f[c] = (f[c + e_i] - f[c]) / h``.
* cell ``|df|^2[c] = sum_i (|D_i f[c]|^2 + |D_i f[c - e_i]|^2) / 2``, the
  per-axis average of the squared differences on the two faces of ``c``.
* ``e_2 = eps + |df|^2`` per cell and ``sigma = e_2^(n/2 - 1)`` per cell.
* face weight ``sigma_i[c] = (sigma[c] + sigma[c + e_i]) / 2``.

With these choices the discrete energy ``(1/n) h^n sum e_2^(n/2)`` has the
exact gradient ``-h^n div(sigma_face D f)``, so the flux-form n-Laplacian is
the variational derivative of the discrete energy, not an approximation of it.
"""

from __future__ import annotations

import numpy as np

from .exceptions import GridError, RegularizationError
from .grid import GridSpec


def _check_map(grid: GridSpec, f):
    f = np.asarray(f, dtype=float)
    if f.ndim != grid.dim + 1 or f.shape[:-1] != grid.shape:
        raise GridError(f"map of shape {f.shape} does not match grid {grid.shape} x L")
    return f


def _check_eps(eps):
    if not eps > 0:
        raise RegularizationError(f"regularization required: eps={eps!r} must be > 0")
    if eps > 1:
        raise RegularizationError(f"eps={eps!r} outside (0, 1]")


def gradient(grid: GridSpec, f) -> np.ndarray:
    """Forward differences on faces, shape ``(dim,) + f.shape``."""
    f = _check_map(grid, f)
    return np.stack([(np.roll(f, -1, axis=i) - f) / grid.h for i in range(grid.dim)])


def face_sq(df) -> np.ndarray:
    """``|D_i f|^2`` on every face (sums the ambient axis)."""
    return np.einsum("i...l,i...l->i...", df, df)


def cell_average_faces(q) -> np.ndarray:
    """``sum_i (q_i[c] + q_i[c - e_i]) / 2`` for face scalars ``q``."""
    out = np.zeros(q.shape[1:])
    for i in range(q.shape[0]):
        out += 0.5 * (q[i] + np.roll(q[i], 1, axis=i))
    return out


def df_sq(grid: GridSpec, f, df=None) -> np.ndarray:
    """Cell-centered ``|df|^2``."""
    if df is None:
        df = gradient(grid, f)
    return cell_average_faces(face_sq(df))


def energy_density(grid: GridSpec, f, eps, df=None) -> np.ndarray:
    """``e_2(f) = eps + |df|^2`` per cell."""
    _check_eps(eps)
    return eps + df_sq(grid, f, df)


def cell_sigma(e2, n) -> np.ndarray:
    # x ** 0.0 is exactly 1.0, so n = 2 gives unit weights bit-exactly
    return e2 ** (n / 2.0 - 1.0)


def face_weights(sigma) -> np.ndarray:
    """Average of the two cell weights adjacent to each face."""
    dim = sigma.ndim
    return np.stack([0.5 * (sigma + np.roll(sigma, -1, axis=i)) for i in range(dim)])


def divergence_weighted(grid: GridSpec, sigma, V) -> np.ndarray:
    """Conservative divergence of the face field ``sigma * V``.

    ``sigma`` has shape ``(dim,) + grid.shape``; ``V`` has shape
    ``(dim,) + grid.shape + (L,)``.  Adjoint to :func:`gradient`:
    ``sum <div(sigma V), psi> = -sum sigma <V, D psi>``.
    """
    sigma = np.asarray(sigma, dtype=float)
    V = np.asarray(V, dtype=float)
    if sigma.shape != (grid.dim,) + grid.shape or V.shape[:-1] != sigma.shape:
        raise GridError(f"shape mismatch: sigma {sigma.shape}, V {V.shape}")
    out = np.zeros(V.shape[1:])
    for i in range(grid.dim):
        flux = sigma[i][..., None] * V[i]
        out += (flux - np.roll(flux, 1, axis=i)) / grid.h
    return out


def n_laplacian_reg(grid: GridSpec, f, eps, n, df=None) -> np.ndarray:
    """Flux-form ``div((eps + |df|^2)^(n/2-1) df)``."""
    if df is None:
        df = gradient(grid, f)
    e2 = energy_density(grid, f, eps, df)
    return divergence_weighted(grid, face_weights(cell_sigma(e2, n)), df)


def hessian(grid: GridSpec, f) -> np.ndarray:
    """Centered second differences, shape ``(dim, dim) + f.shape``."""
    f = _check_map(grid, f)
    h2 = grid.h**2
    H = np.empty((grid.dim, grid.dim) + f.shape)
    for i in range(grid.dim):
        fp = np.roll(f, -1, axis=i)
        fm = np.roll(f, 1, axis=i)
        H[i, i] = (fp - 2 * f + fm) / h2
        for j in range(i + 1, grid.dim):
            H[i, j] = (
                np.roll(fp, -1, axis=j)
                - np.roll(fp, 1, axis=j)
                - np.roll(fm, -1, axis=j)
                + np.roll(fm, 1, axis=j)
            ) / (4 * h2)
            H[j, i] = H[i, j]
    return H


def hessian_norm_sq(grid: GridSpec, f) -> np.ndarray:
    """``sum_{i,j,alpha} (d_i d_j f^alpha)^2`` per cell."""
    H = hessian(grid, f)
    return np.sum(H * H, axis=(0, 1, -1))


def scalar_gradient_sq(grid: GridSpec, u) -> np.ndarray:
    """Cell-centered ``|grad u|^2`` of a scalar field, same convention as maps."""
    u = np.asarray(u, dtype=float)
    return df_sq(grid, u[..., None])
