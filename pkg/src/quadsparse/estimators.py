"""scikit-learn style front ends.

The "design matrix" here is the measurement ensemble: ``X`` is either a
:class:`~quadsparse.ensemble.MeasurementEnsemble` or an ``(m, n, n)`` array,
and the target is the observation vector ``y``. After ``fit`` the recovered
signal lives in ``coef_`` and ``predict(X)`` returns ``coef_^T A_i coef_`` for
every matrix in ``X``, so ``score`` is the usual R^2 of the refit
measurements.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from . import baselines, sgn, spectral
from .validation import check_ensemble, check_measurement_problem, check_vector


class _QuadraticModel(RegressorMixin, BaseEstimator):
    def predict(self, X):
        check_is_fitted(self, "coef_")
        ens = check_ensemble(X)
        if ens.n != self.coef_.size:
            raise ValueError(f"model was fit with n={self.coef_.size}, got ensemble with n={ens.n}")
        return ens.quad(self.coef_)

    def _initial_guess(self, ens, y, x0):
        if x0 is not None:
            self.init_ = None
            return check_vector(x0, ens.n, "x0")
        init = self.init
        if isinstance(init, str):
            if init == "spectral":
                self.init_ = spectral.initialize(ens, y, self.s, convention=self.phi_convention)
            elif init == "tsi":
                self.init_ = baselines.tsi_init(ens, y, self.alpha, convention=self.phi_convention)
            else:
                raise ValueError(f"init must be 'spectral', 'tsi' or an array, got {init!r}")
            return self.init_.x0
        self.init_ = None
        return check_vector(init, ens.n, "init")

    def _store(self, x, trace):
        self.coef_ = x
        self.trace_ = trace
        self.n_iter_ = trace.iterations
        self.status_ = trace.status
        return self


class SpectralInitializer(_QuadraticModel):
    """Top-s marginal support + restricted leading singular vector, scaled by phi."""

    def __init__(self, s=1, phi_convention="mean", tol=1e-10, max_iter=None, fallback="svd"):
        self.s = s
        self.phi_convention = phi_convention
        self.tol = tol
        self.max_iter = max_iter
        self.fallback = fallback

    def fit(self, X, y):
        ens, y, s = check_measurement_problem(X, y, self.s)
        res = spectral.initialize(ens, y, s, convention=self.phi_convention, tol=self.tol,
                                  max_iter=self.max_iter, fallback=self.fallback)
        self.coef_ = res.x0
        self.support_ = res.support_hat
        self.phi_ = res.phi
        self.marginals_ = res.marginals
        self.n_iter_ = res.power_iters_used
        self.result_ = res
        return self


class ThresholdedSpectralInitializer(_QuadraticModel):
    """Same spectral step, support chosen by a marginal threshold scaled by ``alpha``."""

    def __init__(self, alpha=0.5, phi_convention="mean"):
        self.alpha = alpha
        self.phi_convention = phi_convention

    def fit(self, X, y):
        ens, y = check_measurement_problem(X, y)
        res = baselines.tsi_init(ens, y, self.alpha, convention=self.phi_convention)
        self.coef_ = res.x0
        self.support_ = res.support_hat
        self.phi_ = res.phi
        self.marginals_ = res.marginals
        self.n_iter_ = res.power_iters_used
        self.result_ = res
        return self


class SparseGaussNewton(_QuadraticModel):
    """Recover an s-sparse x from y_i = x^T A_i x (+ noise).

    Parameters
    ----------
    s : int
        Sparsity bound.
    step_mu : float or "auto"
        Normalized step for the support-selection gradient step; the actual
        step is ``step_mu / ||x0||^2``. "auto" uses 0.32.
    init : {"spectral", "tsi"} or array
        Initial guess, either computed from the data or given explicitly.

    Attributes
    ----------
    coef_ : ndarray of shape (n,)
        Recovered signal (defined up to a global sign).
    trace_ : SolveTrace
        Per-iteration objective, support and, when ``x_true`` is passed to
        ``fit``, relative error.
    status_ : str
        One of converged, max_iters, stagnated, numerical_failure.
    """

    def __init__(self, s=1, step_mu="auto", max_iters=200, tol_residual=1e-12,
                 tol_stagnation=1e-14, jitter=1e-10, init="spectral", alpha=0.5,
                 phi_convention="mean"):
        self.s = s
        self.step_mu = step_mu
        self.max_iters = max_iters
        self.tol_residual = tol_residual
        self.tol_stagnation = tol_stagnation
        self.jitter = jitter
        self.init = init
        self.alpha = alpha
        self.phi_convention = phi_convention

    def solver_config(self) -> sgn.SolverConfig:
        return sgn.SolverConfig(self.s, self.step_mu, self.max_iters, self.tol_residual,
                                self.tol_stagnation, self.jitter)

    def fit(self, X, y, x0=None, x_true=None):
        ens, y, _ = check_measurement_problem(X, y, self.s)
        start = self._initial_guess(ens, y, x0)
        x, trace = sgn.solve(ens, y, start, self.solver_config(), x_true=x_true)
        return self._store(x, trace)


class GradientDescentProxy(_QuadraticModel):
    """Plain gradient descent on the least-squares objective (no sparsity)."""

    def __init__(self, step_mu=0.1, max_iters=2000, tol_residual=1e-12, tol_stagnation=1e-14,
                 s=1, init="spectral", alpha=0.5, phi_convention="mean"):
        self.step_mu = step_mu
        self.max_iters = max_iters
        self.tol_residual = tol_residual
        self.tol_stagnation = tol_stagnation
        self.s = s
        self.init = init
        self.alpha = alpha
        self.phi_convention = phi_convention

    def fit(self, X, y, x0=None, x_true=None):
        ens, y = check_measurement_problem(X, y)
        start = self._initial_guess(ens, y, x0)
        cfg = baselines.BaselineConfig("wf", self.step_mu, self.max_iters, None, self.alpha,
                                       self.tol_residual, self.tol_stagnation)
        return self._store(*baselines.wf_solve(ens, y, start, cfg, x_true=x_true))


class ThresholdedGradientProxy(GradientDescentProxy):
    """Gradient descent followed by hard thresholding to s entries."""

    def fit(self, X, y, x0=None, x_true=None):
        ens, y, s = check_measurement_problem(X, y, self.s)
        start = self._initial_guess(ens, y, x0)
        cfg = baselines.BaselineConfig("iht", self.step_mu, self.max_iters, s, self.alpha,
                                       self.tol_residual, self.tol_stagnation)
        return self._store(*baselines.iht_solve(ens, y, start, cfg, x_true=x_true))
