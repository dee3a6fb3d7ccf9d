"""Empirical audit of local Sobolev-type inequalities for sphere-valued maps.

Each inequality reads ``lhs <= C * (sum of rhs terms)`` with an unknown
constant ``C``.  :func:`eval_inequality` returns the terms and the ratio
``lhs / sum(terms)``, which is an empirical lower bound for ``C``.  All
integrals are restricted to the cutoff ball ``B_r``.

Identifiers and their integrands (``e = eps + |df|^2``, ``H = |D^2 f|^2``,
``phi`` the cutoff, ``beta >= 0``):

``L2n``
    ``int e^(n+b) phi^n``  vs  ``(int_B e^(n/2))^(2/n) int H e^(n-2+b) phi^n``
    and ``int_B e^(n/2) * int e^(n/2+b) |Dphi|^n``.
``W22r``
    ``int H e^(n-2+b) phi^n``  vs  ``k int |Lap_n f|^2 e^b phi^n`` and
    ``int e^(n-1+b) phi^(n-2) (phi^2 + |Dphi|^2)`` with ``k = 4 + 2b/(n-2)``.
``W22``
    same lhs  vs  ``k int |Lap_n f|^2 e^b phi^n``, ``int e^(n+b) phi^n`` and
    ``int e^(n/2+b) (phi^n + |Dphi|^n)``.
``L3n``
    ``int e^(3n/2) phi^(2n)``  vs  ``(int_B e^(n/2))^(1/(n-1))`` times
    ``(int H e^(n-2) phi^n)^(n/(n-1))`` and ``(int e^(n/2) |Dphi|^n)^(n/(n-1))``.
``LGNr``
    ``||e^(n-1+b) phi^n||_(n/(n-2))``  vs  ``int H e^(n-2+b) phi^n`` and
    ``int e^(n-1+b) |Dphi|^2 phi^(n-2)``.
``LGN``
    same lhs  vs  ``int H e^(n-2+b) phi^n`` and ``int e^(n/2+b) |Dphi|^n``.

At ``n = 2`` the norm in ``LGN*`` is the sup norm (the limit of
``L^(n/(n-2))``) and the coefficient ``k`` is 4, which only makes sense
for ``beta = 0``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import fixtures
from . import operators as ops
from .diagnostics import format_float
from .exceptions import ConfigError, GridError
from .grid import Cutoff, GridSpec, integrate, make_cutoff

IDS = ("L2n", "W22r", "W22", "L3n", "LGNr", "LGN")


@dataclass
class InequalityCase:
    id: str
    grid: GridSpec
    f: np.ndarray
    cutoff: Cutoff
    eps: float
    n: int
    beta: float = 0.0

    def __post_init__(self):
        if self.id not in IDS:
            raise ConfigError(f"unknown inequality {self.id!r}; choose from {', '.join(IDS)}")
        if not 0 <= self.beta <= self.n:
            raise ConfigError(f"beta must lie in [0, n], got {self.beta}")
        if self.n == 2 and self.beta != 0 and self.id in ("W22r", "W22"):
            raise ConfigError("the W22 coefficient 4 + 2 beta/(n-2) is undefined for n = 2, beta > 0")


@dataclass
class RatioReport:
    id: str
    lhs: float
    rhs_terms: dict
    res: int
    ratio: float = field(init=False)

    def __post_init__(self):
        total = sum(self.rhs_terms.values())
        if total > 0:
            self.ratio = self.lhs / total
        else:
            self.ratio = 0.0 if self.lhs == 0 else math.inf


def w22_coefficient(n, beta) -> float:
    return 4.0 if beta == 0 else 4.0 + 2.0 * beta / (n - 2)


class _Fields:
    """Pointwise ingredients shared by all inequalities of one sample."""

    def __init__(self, case: InequalityCase):
        g, n = case.grid, case.n
        phi = case.cutoff.values
        if not np.any(phi > 0):
            raise GridError("degenerate cutoff: all values are zero")
        self.grid = g
        self.ball = case.cutoff.ball.astype(float)
        self.phi = phi
        self.dphi = np.sqrt(case.cutoff.gradient_sq())
        df = ops.gradient(g, case.f)
        self.e = ops.energy_density(g, case.f, case.eps, df)
        self.H = ops.hessian_norm_sq(g, case.f)
        lap = ops.n_laplacian_reg(g, case.f, case.eps, n, df)
        self.lap2 = np.sum(lap * lap, axis=-1)
        self.mass = self.I(self.e ** (n / 2))

    def I(self, v) -> float:
        return integrate(self.grid, v * self.ball)


def eval_inequality(case: InequalityCase) -> RatioReport:
    F = _Fields(case)
    return _evaluate(case, F)


def _evaluate(case: InequalityCase, F: _Fields) -> RatioReport:
    n, b = case.n, case.beta
    e, H, phi, dphi, I = F.e, F.H, F.phi, F.dphi, F.I
    hess = I(H * e ** (n - 2 + b) * phi**n)
    if case.id == "L2n":
        lhs = I(e ** (n + b) * phi**n)
        terms = {
            "mass^(2/n)*hessian": F.mass ** (2 / n) * hess,
            "mass*cutoff_gradient": F.mass * I(e ** (n / 2 + b) * dphi**n),
        }
    elif case.id in ("W22r", "W22"):
        lhs = hess
        lap_term = w22_coefficient(n, b) * I(F.lap2 * e**b * phi**n)
        if case.id == "W22r":
            terms = {
                "k*laplacian": lap_term,
                "lower_order": I(e ** (n - 1 + b) * phi ** (n - 2) * (phi**2 + dphi**2)),
            }
        else:
            terms = {
                "k*laplacian": lap_term,
                "density": I(e ** (n + b) * phi**n),
                "cutoff": I(e ** (n / 2 + b) * (phi**n + dphi**n)),
            }
    elif case.id == "L3n":
        lhs = I(e ** (3 * n / 2) * phi ** (2 * n))
        pre = F.mass ** (1 / (n - 1))
        hess0 = I(H * e ** (n - 2) * phi**n)
        terms = {
            "mass*hessian": pre * hess0 ** (n / (n - 1)),
            "mass*cutoff_gradient": pre * I(e ** (n / 2) * dphi**n) ** (n / (n - 1)),
        }
    else:
        base = e ** (n - 1 + b) * phi**n * F.ball
        if n == 2:
            lhs = float(base.max())
        else:
            lhs = integrate(F.grid, base ** (n / (n - 2))) ** ((n - 2) / n)
        second = (
            I(e ** (n - 1 + b) * dphi**2 * phi ** (n - 2))
            if case.id == "LGNr"
            else I(e ** (n / 2 + b) * dphi**n)
        )
        terms = {"hessian": hess, "cutoff": second}
    return RatioReport(case.id, lhs, terms, case.grid.res)


def eval_all(grid: GridSpec, f, cutoff: Cutoff, eps, n, beta=0.0, ids=IDS) -> list[RatioReport]:
    """All requested inequalities for one sample, sharing the pointwise work."""
    cases = [InequalityCase(i, grid, f, cutoff, eps, n, beta) for i in ids]
    F = _Fields(cases[0])
    return [_evaluate(c, F) for c in cases]


def constant_map_l2n_ratio(grid: GridSpec, cutoff: Cutoff, n) -> float:
    """Closed form of the L2n ratio at ``df = 0``: ``int phi^n / (|B| int |Dphi|^n)``."""
    ball = cutoff.ball.astype(float)
    dphi = np.sqrt(cutoff.gradient_sq())
    return integrate(grid, cutoff.values**n * ball) / (
        integrate(grid, ball) * integrate(grid, dphi**n * ball)
    )


@dataclass(frozen=True)
class CorpusSpec:
    """Seeded family of band-limited sphere-valued samples.

    Sample ``k`` is drawn from its own child seed, so it is the same
    continuum field at every resolution.  ``max_freq = 0`` gives constant maps.
    """

    n: int = 2
    samples: int = 100
    max_freq: int = 1
    eps: float = 0.1
    beta: float = 0.0
    radius: float = math.pi / 2
    L: int = 3
    ids: tuple = IDS

    def sample(self, grid: GridSpec, seed, k):
        ss = np.random.SeedSequence([int(seed), int(k)])
        s_field, s_center = ss.spawn(2)
        center = np.random.default_rng(s_center).uniform(0.0, grid.side, grid.dim)
        if self.max_freq == 0:
            f = fixtures.constant(grid, self.L)
        else:
            f = fixtures.random_bandlimited(
                grid, self.L, seed=s_field, max_freq=self.max_freq
            )
        return f, make_cutoff(grid, tuple(center), self.radius)


@dataclass
class SummaryRow:
    id: str
    res: int
    max_ratio: float
    median_ratio: float
    samples: int
    seed: int


@dataclass
class ScanResult:
    rows: list
    ratios: dict  # (id, res) -> list of ratios in sample order

    def stability_failures(self, factor=2.0) -> list[str]:
        """Ids whose max ratio grows by more than ``factor`` under refinement."""
        bad = []
        by_id = {}
        for r in self.rows:
            by_id.setdefault(r.id, []).append(r)
        for i, rows in by_id.items():
            rows = sorted(rows, key=lambda r: r.res)
            for lo, hi in zip(rows, rows[1:]):
                if not (math.isfinite(hi.max_ratio) and hi.max_ratio <= factor * lo.max_ratio):
                    bad.append(i)
                    break
            if any(not math.isfinite(r.max_ratio) for r in rows) and i not in bad:
                bad.append(i)
        return bad

    def write_csv(self, path_or_file):
        own = not hasattr(path_or_file, "write")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["id", "res", "max_ratio", "median_ratio", "samples", "seed"])
            for r in self.rows:
                wr.writerow([r.id, r.res, format_float(r.max_ratio), format_float(r.median_ratio), r.samples, r.seed])
        finally:
            if own:
                fh.close()


def corpus_scan(spec: CorpusSpec, seed, resolutions, side=2 * math.pi) -> ScanResult:
    ratios = {}
    for res in resolutions:
        grid = GridSpec(spec.n, res, side)
        if spec.max_freq > grid.res // 4:
            raise ConfigError(f"corpus max_freq={spec.max_freq} exceeds res/4 at res={res}")
        for k in range(spec.samples):
            f, cutoff = spec.sample(grid, seed, k)
            for rep in eval_all(grid, f, cutoff, spec.eps, spec.n, spec.beta, spec.ids):
                ratios.setdefault((rep.id, res), []).append(rep.ratio)
    rows = [
        SummaryRow(i, res, float(np.max(v)), float(np.median(v)), len(v), int(seed))
        for (i, res), v in ratios.items()
    ]
    return ScanResult(rows, ratios)
