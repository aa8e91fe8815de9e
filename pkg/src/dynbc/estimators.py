"""scikit-learn style wrappers.

Each row of ``X`` is one nodal field on the mesh described by the
estimator's parameters.  ``fit`` assembles the operators; ``transform``
maps initial fields to flow end states or to equilibria.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .discretization import assemble_operators, build_mesh
from .equilibrium import minimize_energy, solve_stationary
from .flow import FlowConfig, run_trajectory
from .lojasiewicz import convergence_certificate, estimate_theta
from .model import ModelSpec


class _MeshModelMixin:
    def _setup(self, X=None):
        shape = tuple(np.atleast_1d(self.shape).astype(int))
        lengths = self.lengths if self.lengths is not None else (1.0,) * len(shape)
        self.mesh_ = build_mesh(len(shape), shape, tuple(np.atleast_1d(lengths).astype(float)))
        self.ops_ = assemble_operators(self.mesh_)
        self.model_ = ModelSpec(self.mu, list(self.f_coeffs), mesh_dim=self.mesh_.dim)
        self.n_features_in_ = self.mesh_.node_count
        if X is not None:
            self._check_X(X)
        return self

    def _check_X(self, X):
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} columns, the mesh has {self.n_features_in_} nodes")
        return X


class GradientFlow(_MeshModelMixin, TransformerMixin, BaseEstimator):
    """Integrate the flow from each row of ``X``; ``transform`` returns end states.

    Flow parameters mirror :class:`FlowConfig`.  The trajectory records of
    the last ``transform`` call are kept in ``records_``.
    """

    def __init__(
        self,
        shape=(101,),
        lengths=None,
        mu=0,
        f_coeffs=(0.0, -1.0, 0.0, 1.0),
        dt0=1e-3,
        dt_min=1e-10,
        dt_max=1.0,
        t_end=100.0,
        tol_stat=1e-9,
        scheme="implicit",
    ):
        self.shape = shape
        self.lengths = lengths
        self.mu = mu
        self.f_coeffs = f_coeffs
        self.dt0 = dt0
        self.dt_min = dt_min
        self.dt_max = dt_max
        self.t_end = t_end
        self.tol_stat = tol_stat
        self.scheme = scheme

    def fit(self, X=None, y=None):
        self._setup(X)
        self.config_ = FlowConfig(
            dt0=self.dt0,
            dt_min=self.dt_min,
            dt_max=self.dt_max,
            t_end=self.t_end,
            tol_stat=self.tol_stat,
            scheme=self.scheme,
        )
        return self

    def transform(self, X):
        check_is_fitted(self, "ops_")
        X = self._check_X(X)
        self.records_ = [run_trajectory(x, self.config_, self.ops_, self.model_) for x in X]
        self.statuses_ = [r.status for r in self.records_]
        return np.vstack([r.final_state for r in self.records_])


class StationarySolver(_MeshModelMixin, TransformerMixin, BaseEstimator):
    """Map each row of ``X`` (an initial guess) to a discrete equilibrium.

    ``method="newton"`` runs damped Newton directly; ``"descent"`` runs
    preconditioned steepest descent followed by a Newton polish.
    """

    def __init__(self, shape=(101,), lengths=None, mu=0, f_coeffs=(0.0, -1.0, 0.0, 1.0), method="descent", tol=1e-10):
        self.shape = shape
        self.lengths = lengths
        self.mu = mu
        self.f_coeffs = f_coeffs
        self.method = method
        self.tol = tol

    def fit(self, X=None, y=None):
        if self.method not in ("newton", "descent"):
            raise ValueError(f"method must be 'newton' or 'descent', got {self.method!r}")
        return self._setup(X)

    def transform(self, X):
        check_is_fitted(self, "ops_")
        X = self._check_X(X)
        solve = solve_stationary if self.method == "newton" else minimize_energy
        self.equilibria_ = [solve(x, self.ops_, self.model_, tol=self.tol) for x in X]
        return np.vstack([e.psi for e in self.equilibria_])


class LojasiewiczEstimator(_MeshModelMixin, BaseEstimator):
    """Fit the gradient-inequality exponent along flows started from the rows of ``X``.

    After ``fit``: ``fits_`` holds one fit per converged trajectory (None
    otherwise) and ``theta_`` the median of the reliable exponents.
    """

    def __init__(self, shape=(101,), lengths=None, mu=0, f_coeffs=(0.0, -1.0, 0.0, 1.0), dt0=1e-3, t_end=100.0, window=(1e-12, 1e-3)):
        self.shape = shape
        self.lengths = lengths
        self.mu = mu
        self.f_coeffs = f_coeffs
        self.dt0 = dt0
        self.t_end = t_end
        self.window = window

    def fit(self, X, y=None):
        self._setup()
        X = self._check_X(X)
        cfg = FlowConfig(dt0=self.dt0, t_end=self.t_end)
        self.fits_ = []
        for x in X:
            rec = run_trajectory(x, cfg, self.ops_, self.model_)
            cert = convergence_certificate(rec, self.ops_, self.model_)
            if cert.declined:
                self.fits_.append(None)
                continue
            self.fits_.append(estimate_theta(rec, cert.equilibrium, self.ops_, self.model_, window=tuple(self.window)))
        thetas = [f.theta for f in self.fits_ if f is not None and not f.unreliable]
        self.theta_ = float(np.median(thetas)) if thetas else float("nan")
        return self
