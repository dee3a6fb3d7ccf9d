"""Compiled cell loops for the time stepper.

Same formulas as :mod:`nchf.operators`, evaluated one grid axis at a time
on contiguous ``(A, res, B, L)`` views so that the neighbour along the axis
is the next index of the middle dimension.  Loops run in a fixed order, so
results are deterministic.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _accumulate_face_sq(f4, out3, h):
    A, R, B, L = f4.shape
    inv_h2 = 1.0 / (h * h)
    for a in range(A):
        for k in range(R):
            kp = k + 1 if k + 1 < R else 0
            for b in range(B):
                s = 0.0
                for c in range(L):
                    d = f4[a, kp, b, c] - f4[a, k, b, c]
                    s += d * d
                s *= inv_h2
                # each face feeds half of its value to both adjacent cells
                out3[a, k, b] += 0.5 * s
                out3[a, kp, b] += 0.5 * s


@njit(cache=True)
def _accumulate_flux_div(f4, sig3, out4, h):
    A, R, B, L = f4.shape
    inv_h2 = 1.0 / (h * h)
    for a in range(A):
        for k in range(R):
            kp = k + 1 if k + 1 < R else 0
            for b in range(B):
                s_face = 0.5 * (sig3[a, k, b] + sig3[a, kp, b]) * inv_h2
                for c in range(L):
                    flux = s_face * (f4[a, kp, b, c] - f4[a, k, b, c])
                    out4[a, k, b, c] += flux
                    out4[a, kp, b, c] -= flux


def df_sq(f, dim, res, h):
    """Cell ``|df|^2`` for a flat ``(N, L)`` map."""
    N, L = f.shape
    out = np.zeros(N)
    for i in range(dim):
        A, B = res**i, res ** (dim - 1 - i)
        _accumulate_face_sq(f.reshape(A, res, B, L), out.reshape(A, res, B), h)
    return out


def laplacian(f, sigma, dim, res, h):
    """Flux-form ``div(sigma_face D f)`` for flat ``(N, L)`` ``f`` and ``(N,)`` ``sigma``."""
    N, L = f.shape
    out = np.zeros((N, L))
    for i in range(dim):
        A, B = res**i, res ** (dim - 1 - i)
        _accumulate_flux_div(
            f.reshape(A, res, B, L), sigma.reshape(A, res, B), out.reshape(A, res, B, L), h
        )
    return out


@njit(cache=True)
def projected_step(f, lap, w, dt):
    """Tangential part of ``lap``, explicit step and renormalisation.

    Returns ``(f_new, velocity, tau_inf, tangency_max, min_norm, constraint,
    lap_inf)`` where ``tangency_max`` is ``max |<tau, f>|``, ``min_norm`` is
    the smallest pre-projection norm and ``constraint`` is ``max ||f_new| - 1|``.
    """
    N, L = f.shape
    f_new = np.empty((N, L))
    vel = np.empty((N, L))
    tau = np.empty(L)
    tau_inf2 = 0.0
    lap_inf2 = 0.0
    tang = 0.0
    min_norm = np.inf
    cres = 0.0
    inv_dt = 1.0 / dt
    for c in range(N):
        dot = 0.0
        l2 = 0.0
        for a in range(L):
            dot += lap[c, a] * f[c, a]
            l2 += lap[c, a] * lap[c, a]
        if l2 > lap_inf2:
            lap_inf2 = l2
        t2 = 0.0
        td = 0.0
        for a in range(L):
            tau[a] = lap[c, a] - dot * f[c, a]
            t2 += tau[a] * tau[a]
            td += tau[a] * f[c, a]
        if t2 > tau_inf2:
            tau_inf2 = t2
        if abs(td) > tang:
            tang = abs(td)
        scale = dt / w[c]
        y2 = 0.0
        for a in range(L):
            f_new[c, a] = f[c, a] + scale * tau[a]
            y2 += f_new[c, a] * f_new[c, a]
        norm = np.sqrt(y2)
        if norm < min_norm:
            min_norm = norm
        inv = 1.0 / norm
        n2 = 0.0
        for a in range(L):
            f_new[c, a] = f_new[c, a] * inv
            n2 += f_new[c, a] * f_new[c, a]
            vel[c, a] = (f_new[c, a] - f[c, a]) * inv_dt
        r = abs(np.sqrt(n2) - 1.0)
        if r > cres:
            cres = r
    return f_new, vel, np.sqrt(tau_inf2), tang, min_norm, cres, np.sqrt(lap_inf2)
