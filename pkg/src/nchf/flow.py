"""Time integration of the regularized n-conformal heat flow.

Each step is a Lie splitting: an explicit projected step for the map,
followed by the exact solution of the linear ODE for ``w = e^(n u)``

    w_t = n b e_2^(n/2) - n a w

with ``e_2^(n/2)`` interpolated linearly in time between the old and the
new map.  Mode ``frozen_u`` keeps ``w = 1``, which is the plain regularized
n-harmonic map flow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import operators as ops
from .diagnostics import DiagnosticsRecord, moment_exponents
from .exceptions import (
    CFLCollapse,
    ConfigError,
    InvariantViolation,
    NCHFError,
    OperatorOverflow,
    StepTooLarge,
    TubularNeighborhoodError,
)
from . import _kernels as _k
from .grid import GridSpec, integrate, pairwise_sum
from .sphere import (
    TUBE_RADIUS,
    FlowConstants,
    check_constraint,
    constraint_residual,
    project,
    tangential_project,
)

MODES = ("chf", "frozen_u")


@dataclass
class FlowState:
    t: float
    f: np.ndarray
    w: np.ndarray
    f_t_last: np.ndarray | None = None
    step_count: int = 0

    def copy(self) -> "FlowState":
        return FlowState(
            self.t,
            self.f.copy(),
            self.w.copy(),
            None if self.f_t_last is None else self.f_t_last.copy(),
            self.step_count,
        )

    @property
    def u(self) -> np.ndarray:
        n = self.f.ndim - 1
        return np.log(self.w) / n


def initial_state(f0) -> FlowState:
    f0 = np.array(f0, dtype=float)
    return FlowState(0.0, f0, np.ones(f0.shape[:-1]))


@dataclass(frozen=True)
class StepControl:
    cfl_safety: float = 0.4
    dt_min: float = 1e-9
    dt_max: float = 1e-2
    mode: str = "chf"

    def __post_init__(self):
        if not 0 < self.cfl_safety <= 1:
            raise ConfigError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if not 0 < self.dt_min < self.dt_max:
            raise ConfigError("need 0 < dt_min < dt_max")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")


def diffusivity(e2, w, n) -> np.ndarray:
    return ops.cell_sigma(e2, n) / w


def cfl_dt(grid: GridSpec, D_max, control: StepControl) -> float:
    return control.cfl_safety * grid.h**2 / (2 * grid.dim * D_max)


def step_f(grid: GridSpec, state: FlowState, consts: FlowConstants, dt, tol=1e-12, df=None):
    """Explicit constrained step ``f <- project(f + dt * tau / w)``.

    Returns ``(f_new, velocity, tau)`` with ``velocity = (f_new - f) / dt``.
    """
    tau = _tension(grid, state.f, consts, tol, df)
    y = state.f + dt * tau / state.w[..., None]
    try:
        f_new = project(y)
    except TubularNeighborhoodError as exc:
        raise StepTooLarge(f"step too large at t={state.t}: {exc}") from exc
    return f_new, (f_new - state.f) / dt, tau


def _tension(grid, f, consts, tol, df=None):
    check_constraint(f, tol)
    lap = ops.n_laplacian_reg(grid, f, consts.eps, consts.n, df)
    if not np.all(np.isfinite(lap)):
        raise OperatorOverflow("operator overflow: non-finite n-Laplacian")
    return tangential_project(lap, f)


def step_w(w, q_start, consts: FlowConstants, dt, q_end=None) -> np.ndarray:
    """Exact update of ``w_t = n b q - n a w`` over one step.

    ``q`` (``= e_2^(n/2)``) is linear in time from ``q_start`` to ``q_end``;
    with ``q_end=None`` it is frozen at ``q_start``.
    """
    if not dt > 0:
        raise NCHFError("dt must be positive")
    lam = consts.n * consts.a
    x = lam * dt
    one_minus_E = -math.expm1(-x)
    E = math.exp(-x)
    i0 = one_minus_E / lam
    out = w * E + consts.n * consts.b * i0 * q_start
    if q_end is not None:
        # integral of s exp(-lam (dt - s)) over [0, dt], divided by dt
        i1 = (x - one_minus_E) / (lam * lam * dt)
        out = out + consts.n * consts.b * i1 * (q_end - q_start)
    return out


@dataclass
class WHistory:
    """Density samples ``q = e_2^(n/2)`` and stepped ``w`` at probe cells."""

    cells: list
    times: list = field(default_factory=list)
    q: list = field(default_factory=list)
    w: list = field(default_factory=list)

    def record_flat(self, t, q_field, w_field, flat_cells):
        self.times.append(t)
        self.q.append([float(q_field[c]) for c in flat_cells])
        self.w.append([float(w_field[c]) for c in flat_cells])


def closed_form_w(times, q, consts: FlowConstants, w0=1.0):
    """Reconstruct ``w(t_end)`` from the density history.

    ``w(t) = e^(-n a t) (w0 + n b int_0^t e^(n a s) q(s) ds)`` with ``q``
    piecewise linear between samples (trapezoidal product rule, integrated
    exactly against the exponential weight).
    """
    times = np.asarray(times, dtype=float)
    q = np.asarray(q, dtype=float)
    if times.size == 0 or times[0] != 0.0:
        raise NCHFError("incomplete history: must start at t = 0")
    if q.shape[0] != times.size:
        raise NCHFError("incomplete history: one density sample per time required")
    if times.size == 1:
        return np.full(q.shape[1:], float(w0)) if q.ndim > 1 else float(w0)
    lam = consts.n * consts.a
    dt = np.diff(times)
    if np.any(dt <= 0):
        raise NCHFError("history times must increase")
    growth = np.expm1(lam * dt)
    j0 = growth / lam
    j1 = (dt * (growth + 1.0) / lam - growth / lam**2) / dt
    shape = (-1,) + (1,) * (q.ndim - 1)
    weight = np.exp(lam * times[:-1]).reshape(shape)
    pieces = weight * (q[:-1] * j0.reshape(shape) + (q[1:] - q[:-1]) * j1.reshape(shape))
    total = np.sum(pieces, axis=0)
    return math.exp(-lam * times[-1]) * (w0 + consts.n * consts.b * total)


def closed_form_w_check(history: WHistory, consts: FlowConstants, w0=1.0) -> float:
    """Max relative gap between stepped and reconstructed ``w`` at the probes."""
    recon = closed_form_w(history.times, history.q, consts, w0)
    stepped = np.asarray(history.w[-1])
    return float(np.max(np.abs(recon - stepped) / np.abs(stepped)))


@dataclass
class RunInfo:
    """Running extrema and accumulators collected by :func:`advance`."""

    E0: float = math.nan
    V0: float = math.nan
    min_w0: float = math.nan
    t0: float = 0.0
    steps: int = 0
    min_dt: float = math.inf
    max_sup_e2: float = 0.0
    D0: float = math.nan
    max_D: float = 0.0
    D_trace: list = field(default_factory=list)
    dissipation_sum: float = 0.0
    max_tangency: float = 0.0
    max_tangency_operator: float = 0.0
    max_constraint: float = 0.0
    moment_slack_min: float = math.inf


def advance(
    grid: GridSpec,
    state: FlowState,
    control: StepControl,
    consts: FlowConstants,
    t_end,
    sink=None,
    cutoffs=(),
    cadence=1,
    tol=1e-12,
    whistory: WHistory | None = None,
    info: RunInfo | None = None,
    check_invariants=True,
    moment_cutoff=None,
    emit_initial=True,
) -> FlowState:
    """Integrate from ``state.t`` to ``t_end``; returns the final state.

    ``sink(record, state)`` is called for the initial state (unless
    ``emit_initial`` is false, as when resuming) and every ``cadence``
    steps, always including the last one.  Runtime invariants raise
    :class:`InvariantViolation`; an adaptive step below ``control.dt_min``
    raises :class:`CFLCollapse`.
    """
    if not t_end > state.t:
        raise NCHFError(f"t_end={t_end} must exceed current time {state.t}")
    if consts.n != grid.dim:
        raise ConfigError(f"flow exponent n={consts.n} must equal grid dim {grid.dim}")
    n = consts.n
    N = grid.n_cells
    frozen = control.mode == "frozen_u"
    info = info if info is not None else RunInfo()
    check_constraint(state.f, tol)
    L = state.f.shape[-1]
    dim, res, h = grid.dim, grid.res, grid.h
    moments = moment_exponents(n)
    phis_n = [c.values.ravel() ** n for c in cutoffs]
    moment_phi = None if moment_cutoff is None else moment_cutoff.values.ravel() ** n

    def I(v):
        return grid.cell_volume * pairwise_sum(v)

    f = np.ascontiguousarray(state.f, dtype=float).reshape(N, L)
    w = np.ones(N) if frozen else np.array(state.w, dtype=float).reshape(N)
    t = float(state.t)
    step_count = state.step_count

    e2 = consts.eps + _k.df_sq(f, dim, res, h)
    sigma = ops.cell_sigma(e2, n)
    q = e2 ** (n / 2)
    E = I(q) / n
    V = I(w)
    D = sigma / w
    D_max = float(D.max())

    info.E0, info.V0, info.min_w0, info.t0 = E, V, float(w.min()), t
    info.D0 = D_max
    info.max_D = D_max
    info.D_trace.append((t, D_max))
    info.max_sup_e2 = float(e2.max())
    moment_w0 = moment_acc = None
    if moment_phi is not None and not frozen:
        moment_w0 = I(w**2 * moment_phi)
        moment_acc = 0.0
    flat_cells = [int(np.ravel_multi_index(c, grid.shape)) for c in whistory.cells] if whistory else []
    if whistory is not None:
        whistory.record_flat(t, q, w, flat_cells)

    def local_max(qq):
        return max((I(qq * p) for p in phis_n), default=0.0)

    def shaped(state_f, state_w, f_t):
        return FlowState(
            t, state_f.reshape(grid.shape + (L,)), state_w.reshape(grid.shape),
            None if f_t is None else f_t.reshape(grid.shape + (L,)), step_count,
        )

    if sink is not None and emit_initial:
        sink(
            DiagnosticsRecord(
                t=t, E_eps=E, dissipation=0.0, volume=V, sup_e2=float(e2.max()),
                min_w=float(w.min()), max_diffusivity=D_max,
                constraint_residual=constraint_residual(f), tangency_residual=0.0,
                dt_used=0.0, local_energy_max=local_max(q),
                kinetic={p: 0.0 for p in moments},
            ),
            shaped(f, w, None),
        )

    step = 0
    while t < t_end:
        dt_cfl = cfl_dt(grid, D_max, control)
        if dt_cfl < control.dt_min:
            loc = tuple(int(i) for i in np.unravel_index(int(np.argmax(D)), grid.shape))
            raise CFLCollapse(
                f"CFL collapse at t={t:.6g}: dt={dt_cfl:.3e} < dt_min={control.dt_min:.1e}, "
                f"max diffusivity {D_max:.3e} at cell {loc}",
                t=t, dt=dt_cfl, location=loc,
            )
        dt = min(dt_cfl, control.dt_max)
        last = t + dt >= t_end
        if last:
            dt = t_end - t

        lap = _k.laplacian(f, sigma, dim, res, h)
        f_new, f_t, tau_inf, tang, min_norm, cres, lap_inf = _k.projected_step(f, lap, w, dt)
        if not math.isfinite(tau_inf):
            raise OperatorOverflow(f"operator overflow at t={t}: non-finite tension")
        if min_norm <= TUBE_RADIUS:
            raise StepTooLarge(f"step too large at t={t}: left tubular neighborhood")
        # same residual on the operator scale; stays meaningful where tau is round-off
        tang_op = tang / lap_inf if lap_inf > 0 else 0.0
        tang = tang / tau_inf if tau_inf > 0 else 0.0

        e2_new = consts.eps + _k.df_sq(f_new, dim, res, h)
        sigma = ops.cell_sigma(e2_new, n)
        q_new = e2_new ** (n / 2)
        w_new = w if frozen else step_w(w, q, consts, dt, q_new)

        t_new = t_end if last else t + dt
        step += 1
        step_count += 1
        E_new = I(q_new) / n
        speed2 = np.einsum("cl,cl->c", f_t, f_t)
        dissipation = I(w * speed2)
        V_new = I(w_new)
        D = sigma / w_new
        D_max = float(D.max())

        info.steps += 1
        info.min_dt = min(info.min_dt, dt)
        info.max_sup_e2 = max(info.max_sup_e2, float(e2_new.max()))
        info.max_D = max(info.max_D, D_max)
        info.D_trace.append((t_new, D_max))
        info.dissipation_sum += dt * dissipation
        info.max_tangency = max(info.max_tangency, tang)
        info.max_tangency_operator = max(info.max_tangency_operator, tang_op)
        info.max_constraint = max(info.max_constraint, cres)

        if check_invariants:
            if E_new > E + 1e-12 * info.E0:
                raise InvariantViolation("energy_monotonicity", step_count, f"E {E!r} -> {E_new!r}")
            if cres > tol:
                raise InvariantViolation("constraint", step_count, f"max||f|-1| = {cres:.3e}")
            if not frozen:
                decay = math.exp(-n * consts.a * (t_new - info.t0))
                vbound = decay * info.V0 + n * consts.b / consts.a * info.E0 + 1e-9
                if V_new > vbound:
                    raise InvariantViolation("volume_bound", step_count, f"V={V_new!r} > {vbound!r}")
                wmin = float(w_new.min())
                if wmin < decay * info.min_w0 - 1e-12:
                    raise InvariantViolation("conformal_lower_bound", step_count, f"min w={wmin!r}")

        if moment_acc is not None:
            moment_acc += 0.5 * dt * (I(q**2 * moment_phi) + I(q_new**2 * moment_phi))

        w_old = w
        f, w, e2, q, E, t = f_new, w_new, e2_new, q_new, E_new, t_new
        if whistory is not None:
            whistory.record_flat(t, q, w, flat_cells)

        emit = step % cadence == 0 or last
        if emit and moment_acc is not None:
            # localized bound on int w^2 phi^n by its initial value plus the q^2 flux
            lhs = I(w**2 * moment_phi)
            rhs = moment_w0 + n * consts.b**2 / (2 * consts.a) * moment_acc
            info.moment_slack_min = min(info.moment_slack_min, rhs - lhs)
            if check_invariants and lhs > rhs + 1e-9 + 1e-13 * abs(rhs):
                raise InvariantViolation("w_moment_bound", step_count, f"{lhs!r} > {rhs!r}")
        if emit and sink is not None:
            sink(
                DiagnosticsRecord(
                    t=t, E_eps=E, dissipation=dissipation, volume=V_new,
                    sup_e2=float(e2.max()), min_w=float(w.min()), max_diffusivity=D_max,
                    constraint_residual=cres, tangency_residual=tang, dt_used=dt,
                    local_energy_max=local_max(q),
                    kinetic={p: I(w_old * speed2 ** ((p + 2) / 2)) for p in moments},
                ),
                shaped(f, w, f_t),
            )
    return shaped(f, w, f_t)


def kinetic_moment_raw(grid, f_t, w, p, speed2=None):
    if speed2 is None:
        speed2 = np.sum(f_t * f_t, axis=-1)
    return integrate(grid, w * speed2 ** ((p + 2) / 2))


def with_mode(control: StepControl, mode) -> StepControl:
    return replace(control, mode=mode)
