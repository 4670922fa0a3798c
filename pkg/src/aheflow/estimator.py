"""scikit-learn style facade over the flow.

``fit`` evolves an initial metric and keeps the trajectory; ``transform``
evolves any metric with the same parameters and returns the final ``H``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import validation
from .flow import FlowConfig, residual_norms, run
from .moment import evaluate


class AlmostHermitianEinsteinFlow(BaseEstimator):
    """Run the almost Hermitian-Einstein flow on a metric field.

    Parameters
    ----------
    k : float or "inf"
        Polarization parameter; ``"inf"`` gives the Donaldson heat flow.
    dt, t_end : float
        Step size and final time.
    integrator : {"rk4", "imex"}
    tol : float or None
        Stop early once the residual sup norm drops below ``tol``.
    beta : float
        Background curvature coefficient of the bundle.
    N : int or None
        Lattice size; inferred from the input when None.
    g : array_like or None
        Kähler coefficients (identity when None).
    stability_constant : float
        ``c_s`` in the rk4 step bound ``dt <= c_s / (N^2 ||g^{-1}||)``.

    Attributes
    ----------
    trajectory_ : Trajectory
    metric_ : MetricField
        Final metric of the fitted run.
    residual_ : float
        Sup norm of the residual at the end of the fitted run.
    """

    def __init__(
        self,
        k=20.0,
        dt=1e-3,
        t_end=1.0,
        integrator="rk4",
        tol=1e-8,
        beta=0.0,
        N=None,
        g=None,
        stability_constant=1.0,
    ):
        self.k = k
        self.dt = dt
        self.t_end = t_end
        self.integrator = integrator
        self.tol = tol
        self.beta = beta
        self.N = N
        self.g = g
        self.stability_constant = stability_constant

    def _config(self):
        return FlowConfig(
            k=validation.check_k(self.k),
            dt=validation.check_positive("dt", self.dt),
            t_end=validation.check_positive("t_end", self.t_end, allow_zero=True),
            integrator=self.integrator,
            tol=self.tol,
            stability_constant=self.stability_constant,
        )

    def _metric(self, X):
        if hasattr(X, "H") and hasattr(X, "geometry"):
            return validation.check_metric(X)
        X = np.asarray(X)
        N = self.N if self.N is not None else (X.shape[0] if X.ndim else None)
        geometry = validation.check_geometry(N, self.g)
        return validation.check_metric(X, geometry, self.beta)

    def fit(self, X, y=None):
        """Evolve the initial metric ``X`` (array or MetricField)."""
        m0 = self._metric(X)
        traj = run(m0, self._config())
        self.trajectory_ = traj
        self.metric_ = traj.final.m
        self.residual_ = traj.records[-1].res_Linf
        self.n_steps_ = len(traj.records) - 1
        return self

    def transform(self, X):
        """Final metric array ``H`` after flowing ``X`` with the fitted parameters."""
        check_is_fitted(self, "trajectory_")
        m0 = self._metric(X)
        return run(m0, self._config()).final.m.H

    def fit_transform(self, X, y=None):
        return self.fit(X).metric_.H

    def score(self, X, y=None):
        """Negative residual L2 norm of ``X`` at this ``k`` (higher is better)."""
        m = self._metric(X)
        return -residual_norms(m, evaluate(m, self.k).rho)[0]
