"""scikit-learn style front end.

``ConformalHeatFlow`` treats one sampled map as the input ``X`` and the
evolved map as the transform output.  Hyper-parameters are the flow and
step-control settings, so ``get_params`` / ``set_params`` / ``clone`` work
as usual; fitted attributes end in an underscore.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import flow
from .diagnostics import CSVSink
from .exceptions import GridError
from .grid import GridSpec
from .sphere import FlowConstants, constraint_residual


def check_sphere_map(X, constraint_tol=1e-12) -> tuple[np.ndarray, GridSpec]:
    """Validate a map of shape ``(res,) * n + (L,)`` and infer its grid."""
    X = np.asarray(X, dtype=float)
    if X.ndim < 3 or X.ndim > 5:
        raise GridError(f"expected a map of shape (res,)*n + (L,) with n in 2..4, got {X.shape}")
    shape = X.shape[:-1]
    if len(set(shape)) != 1:
        raise GridError(f"grid must be isotropic, got {shape}")
    if not np.all(np.isfinite(X)):
        raise GridError("map contains non-finite values")
    res = constraint_residual(X)
    if res > constraint_tol:
        raise GridError(f"map is off the unit sphere by {res:.3e}")
    return X, GridSpec(len(shape), shape[0])


class ConformalHeatFlow(TransformerMixin, BaseEstimator):
    def __init__(
        self,
        eps=0.1,
        a=1.0,
        b=None,
        t_end=0.5,
        mode="chf",
        cfl_safety=0.4,
        dt_min=1e-9,
        dt_max=1e-2,
        cadence=1,
        side=2 * math.pi,
    ):
        self.eps = eps
        self.a = a
        self.b = b
        self.t_end = t_end
        self.mode = mode
        self.cfl_safety = cfl_safety
        self.dt_min = dt_min
        self.dt_max = dt_max
        self.cadence = cadence
        self.side = side

    def _setup(self, X):
        X, grid = check_sphere_map(X)
        grid = GridSpec(grid.dim, grid.res, self.side)
        b = 8.0 / grid.dim if self.b is None else self.b
        consts = FlowConstants(grid.dim, self.a, b, self.eps)
        control = flow.StepControl(self.cfl_safety, self.dt_min, self.dt_max, self.mode)
        return X, grid, consts, control

    def _evolve(self, X):
        X, grid, consts, control = self._setup(X)
        records = []
        info = flow.RunInfo()
        state = flow.advance(
            grid, flow.initial_state(X), control, consts, self.t_end,
            sink=lambda rec, st: records.append(rec), cadence=self.cadence, info=info,
        )
        return grid, state, records, info

    def fit(self, X, y=None):
        self.grid_, self.state_, self.records_, self.info_ = self._evolve(X)
        self.n_features_in_ = self.state_.f.shape[-1]
        return self

    def transform(self, X):
        """Evolve ``X`` with the fitted settings and return the final map."""
        check_is_fitted(self, "state_")
        return self._evolve(X)[1].f

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).state_.f

    @property
    def conformal_factor_(self) -> np.ndarray:
        check_is_fitted(self, "state_")
        return self.state_.w

    def energy_trace(self) -> tuple[np.ndarray, np.ndarray]:
        check_is_fitted(self, "records_")
        return (
            np.array([r.t for r in self.records_]),
            np.array([r.E_eps for r in self.records_]),
        )

    def write_diagnostics(self, path):
        check_is_fitted(self, "records_")
        with CSVSink(path) as sink:
            for rec in self.records_:
                sink(rec)
