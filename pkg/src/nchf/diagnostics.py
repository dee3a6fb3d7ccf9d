"""Energies, local energy concentration and per-step records."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import operators as ops
from .exceptions import GridError, NCHFError
from .grid import GridSpec, integrate, make_cutoff


def moment_exponents(n) -> tuple[float, ...]:
    return (0.0, 1.0, 2.0, n - 2 + 1 / 8)


def moment_name(p) -> str:
    return "kinetic_p" + format(p, "g")


@dataclass
class DiagnosticsRecord:
    t: float
    E_eps: float
    dissipation: float
    volume: float
    sup_e2: float
    min_w: float
    max_diffusivity: float
    constraint_residual: float
    tangency_residual: float
    dt_used: float
    local_energy_max: float
    kinetic: dict = field(default_factory=dict)

    def header(self) -> list[str]:
        names = [f.name for f in fields(self) if f.name != "kinetic"]
        return names + [moment_name(p) for p in self.kinetic]

    def row(self) -> list[float]:
        vals = [getattr(self, f.name) for f in fields(self) if f.name != "kinetic"]
        return vals + list(self.kinetic.values())


def format_float(x) -> str:
    return format(float(x), ".17g")


class CSVSink:
    """Writes one row per emitted record; header taken from the first record."""

    def __init__(self, path_or_file):
        if hasattr(path_or_file, "write"):
            self._fh = path_or_file
            self._own = False
        else:
            self._fh = open(path_or_file, "w", newline="")
            self._own = True
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._header = None
        self.records = []

    def __call__(self, record, state=None):
        if self._header is None:
            self._header = record.header()
            self._writer.writerow(self._header)
        self._writer.writerow([format_float(v) for v in record.row()])
        self.records.append(record)

    def close(self):
        if self._own:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_records_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(header)}


def total_energy(grid: GridSpec, f, eps, n, e2=None) -> float:
    """``(1/n) * integral of (eps + |df|^2)^(n/2)`` w.r.t. the flat metric."""
    if e2 is None:
        e2 = ops.energy_density(grid, f, eps)
    return integrate(grid, e2 ** (n / 2)) / n


@dataclass(frozen=True)
class Probe:
    center: tuple
    radius: float


# half the local energy at which the frozen-factor leg on the reference bump
# (n=3, res 32, radius 2, amplitude 1.5, dt_min 3e-4) first trips the CFL floor
DEFAULT_THRESHOLD = 25.0


@dataclass
class ProbeSet:
    probes: list
    threshold: float = DEFAULT_THRESHOLD

    def __post_init__(self):
        self.probes = [p if isinstance(p, Probe) else Probe(tuple(p[0]), float(p[1])) for p in self.probes]
        if not self.threshold > 0:
            raise NCHFError("concentration threshold must be positive")

    def validate(self, grid: GridSpec):
        for p in self.probes:
            if p.radius <= 2 * grid.h:
                raise GridError(f"probe radius {p.radius} <= 2h; unresolved")
            if len(p.center) != grid.dim:
                raise GridError(f"probe center {p.center} has wrong dimension")

    def cutoffs(self, grid: GridSpec):
        self.validate(grid)
        return [make_cutoff(grid, p.center, p.radius) for p in self.probes]


def parse_probes(spec: str) -> list[Probe]:
    """Parse ``"x1,x2@r; y1,y2@r"`` into probes."""
    out = []
    for item in spec.split(";"):
        item = item.strip()
        if not item:
            continue
        try:
            c, r = item.split("@")
            out.append(Probe(tuple(float(v) for v in c.split(",")), float(r)))
        except ValueError as exc:
            raise NCHFError(f"bad probe spec {item!r}; expected 'x1,...,xn@r'") from exc
    return out


def format_probes(probes) -> str:
    return "; ".join(",".join(repr(float(c)) for c in p.center) + "@" + repr(float(p.radius)) for p in probes)


def local_energy(grid: GridSpec, f, probe, eps, n, e2=None, cutoff=None) -> float:
    """``Theta_r = integral of e_2^(n/2) phi^n`` for the cutoff of ``probe``."""
    if cutoff is None:
        cutoff = make_cutoff(grid, probe.center, probe.radius)
    if e2 is None:
        e2 = ops.energy_density(grid, f, eps)
    return integrate(grid, e2 ** (n / 2) * cutoff.values**n)


def kinetic_moment(grid: GridSpec, f_t, w, p) -> float:
    """``integral of w |f_t|^(p+2)``."""
    if p < 0:
        raise NCHFError("moment exponent must be >= 0")
    speed2 = np.sum(np.asarray(f_t) ** 2, axis=-1)
    return integrate(grid, w * speed2 ** ((p + 2) / 2))


def velocity_gradient_moment(grid: GridSpec, f, f_t, eps, n, cutoff=None) -> float:
    """``integral of e_2^(n/2-1) |d f_t|^2 phi^n``; ``phi = 1`` without a cutoff.

    Optional audit quantity, not written to the CSV stream.
    """
    weight = ops.cell_sigma(ops.energy_density(grid, f, eps), n) * ops.df_sq(grid, f_t)
    if cutoff is not None:
        weight = weight * cutoff.values**n
    return integrate(grid, weight)


def probe_lattice(grid: GridSpec, stride=None):
    """Centers on the coarse sublattice of every ``res // 8`` cells."""
    stride = stride or max(grid.res // 8, 1)
    idx = np.arange(0, grid.res, stride) * grid.h
    return [tuple(float(v) for v in c) for c in np.array(np.meshgrid(*([idx] * grid.dim), indexing="ij")).reshape(grid.dim, -1).T]


@dataclass
class ConcentrationReport:
    thetas: list
    flags: list
    threshold: float
    max_center: tuple
    max_theta: float

    @property
    def n_flagged(self) -> int:
        return sum(self.flags)


def concentration_scan(grid: GridSpec, f, probes: ProbeSet, eps, n, lattice_radius=None, stride=None) -> ConcentrationReport:
    e2 = ops.energy_density(grid, f, eps)
    q = e2 ** (n / 2)
    thetas = [integrate(grid, q * c.values**n) for c in probes.cutoffs(grid)]
    flags = [th > probes.threshold for th in thetas]
    r = lattice_radius or (probes.probes[0].radius if probes.probes else grid.side / 8)
    best, best_c = -math.inf, None
    for c in probe_lattice(grid, stride):
        th = integrate(grid, q * make_cutoff(grid, c, r).values ** n)
        if th > best:
            best, best_c = th, c
    return ConcentrationReport(thetas, flags, probes.threshold, best_c, best)


@dataclass
class HolderReport:
    max_ratio: float
    argmax: tuple
    n_pairs: int


def theta_holder_check(times, thetas, flux, floor=1e-14) -> HolderReport:
    """Discrete Holder-1/2 audit of a local-energy trajectory.

    ``flux[k]`` is ``integral of e_2^(n/2) |f_t|^2`` over the probe ball on
    step ``k -> k+1``.  For every pair ``s < t`` of samples reports
    ``|Theta(t) - Theta(s)| / ((t - s)^(1/2) * (sum dt * flux)^(1/2) + floor)``.
    """
    times = np.asarray(times, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    flux = np.asarray(flux, dtype=float)
    if times.size < 3:
        raise NCHFError("Holder check needs at least 3 samples")
    if flux.size != times.size - 1:
        raise NCHFError("flux must have one entry per step")
    cum = np.concatenate([[0.0], np.cumsum(np.diff(times) * flux)])
    dT = times[None, :] - times[:, None]
    num = np.abs(thetas[None, :] - thetas[:, None])
    den = np.sqrt(np.maximum(dT, 0.0)) * np.sqrt(np.maximum(cum[None, :] - cum[:, None], 0.0)) + floor
    ratio = np.where(dT > 0, num / den, 0.0)
    k = np.unravel_index(np.argmax(ratio), ratio.shape)
    return HolderReport(float(ratio[k]), (int(k[0]), int(k[1])), int(np.count_nonzero(dT > 0)))
