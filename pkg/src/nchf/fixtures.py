"""Initial data: sphere-valued fields sampled on the grid."""

from __future__ import annotations

import itertools
import math

import numpy as np

from .exceptions import ConfigError
from .grid import GridSpec, displacement
from .sphere import project

FIXTURES = ("constant", "great_circle", "bump", "random_bandlimited", "equator_wrap")


def constant(grid: GridSpec, L=3) -> np.ndarray:
    f = np.zeros(grid.shape + (L,))
    f[..., -1] = 1.0
    return f


def equator_wrap(grid: GridSpec, L=3, degree=1) -> np.ndarray:
    """``(cos(k x_1), sin(k x_1), 0, ...)`` winding ``degree`` times along axis 0."""
    x = grid.coords()[0]
    k = 2 * math.pi * int(degree) / grid.side
    f = np.zeros(grid.shape + (L,))
    f[..., 0] = np.cos(k * x)
    f[..., 1] = np.sin(k * x)
    return f


def great_circle(grid: GridSpec, L=3) -> np.ndarray:
    return equator_wrap(grid, L, 1)


def bump(grid: GridSpec, L=None, center=None, radius=1.5, amplitude=4.0) -> np.ndarray:
    """Degree-one bubble glued to the north pole outside ``B_radius(center)``.

    Inside the ball the map is inverse stereographic projection of
    ``z = (x - c) / (core * psi(d / radius))`` with ``core = radius / amplitude``
    and ``psi = cos^2(pi s / 2)``.  The center goes to the south pole and the
    energy density peaks at the core scale, so larger ``amplitude`` means a
    more concentrated bubble.  Needs ``L >= dim + 1``.
    """
    n = grid.dim
    if L is None:
        L = n + 1
    if L < n + 1:
        raise ConfigError(f"bump fixture needs L >= dim + 1 = {n + 1}, got L={L}")
    if center is None:
        center = [grid.side / 2] * n
    if not amplitude > 0:
        raise ConfigError("bump amplitude must be positive")
    if not 0 < radius <= grid.side / 2:
        raise ConfigError(f"bump radius must lie in (0, side/2], got {radius}")
    core = radius / amplitude
    disp = displacement(grid, center)
    d = np.sqrt(sum(x * x for x in disp))
    psi = np.where(d < radius, np.cos(np.pi * np.minimum(d, radius) / (2 * radius)) ** 2, 0.0)
    # w = z / |z|^2 stays bounded and vanishes smoothly at the support edge
    scale = core * psi
    denom = d * d + scale * scale
    safe = np.where(denom > 0, denom, 1.0)
    f = np.zeros(grid.shape + (L,))
    for i, x in enumerate(disp):
        f[..., i] = np.where(denom > 0, 2 * x * scale / safe, 0.0)
    f[..., -1] = np.where(denom > 0, (d * d - scale * scale) / safe, 1.0)
    return project(f)


def wavevectors(dim, max_freq):
    """Half of the nonzero integer vectors with sup-norm <= ``max_freq``."""
    out = []
    for k in itertools.product(range(-max_freq, max_freq + 1), repeat=dim):
        if any(k) and k > tuple(-c for c in k):
            out.append(k)
    return out


def trig_polynomial(grid: GridSpec, L, max_freq, rng) -> tuple[np.ndarray, float]:
    """Random real trigonometric polynomial in ``R^L`` and a sup-norm bound.

    Coefficients are drawn in a fixed order over wavevectors, so the sampled
    function does not depend on the resolution.
    """
    if max_freq < 0:
        raise ConfigError("max_freq must be >= 0")
    if max_freq > grid.res // 4:
        raise ConfigError(f"max_freq={max_freq} too close to Nyquist for res={grid.res}")
    # integer wavevectors in units of the fundamental mode 2 pi / side
    G = np.zeros(grid.shape + (L,), dtype=complex)
    bound = 0.0
    for k in wavevectors(grid.dim, max_freq):
        amp = 1.0 / (1.0 + float(np.dot(k, k)))
        a = rng.standard_normal(L) * amp
        b = rng.standard_normal(L) * amp
        bound += float(np.linalg.norm(a) + np.linalg.norm(b))
        kp = tuple(c % grid.res for c in k)
        km = tuple(-c % grid.res for c in k)
        G[kp] += 0.5 * (a - 1j * b)
        G[km] += 0.5 * (a + 1j * b)
    axes = tuple(range(grid.dim))
    g = np.real(np.fft.ifftn(G, axes=axes)) * grid.n_cells
    return g, bound


def random_bandlimited(grid: GridSpec, L=3, seed=0, max_freq=2, amplitude=0.85) -> np.ndarray:
    """``project(N + amplitude * g / bound)`` for a random trig polynomial ``g``.

    ``amplitude < 0.9`` keeps the pre-image out of the projection guard.
    """
    if not 0 <= amplitude < 0.9:
        raise ConfigError("random_bandlimited amplitude must lie in [0, 0.9)")
    rng = np.random.default_rng(seed)
    y = constant(grid, L)
    if max_freq > 0:
        g, bound = trig_polynomial(grid, L, max_freq, rng)
        y = y + amplitude * g / bound
    return project(y)


def make_fixture(grid: GridSpec, name, L=None, **params) -> np.ndarray:
    if name not in FIXTURES:
        raise ConfigError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
    if name == "bump":
        return bump(grid, L, **params)
    L = 3 if L is None else L
    if name == "constant":
        return constant(grid, L)
    if name == "great_circle":
        return great_circle(grid, L)
    if name == "equator_wrap":
        return equator_wrap(grid, L, **params)
    return random_bandlimited(grid, L, **params)
