"""Comparison methods: gradient-descent proxies and thresholded spectral init.

``wf_solve`` and ``iht_solve`` are simplified stand-ins for the Wirtinger-flow
family (plain and thresholded gradient descent on the same least-squares
objective with a fixed normalized step). They are not reimplementations of
any published variant and are labeled as proxies in every output.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import rel_error as _rel_error
from .sgn import DegenerateInputError, SolveTrace, _linearize, hard_threshold
from .spectral import InitResult, norm_estimate, restricted_spectral
from .validation import check_measurement_problem, check_sparsity, check_vector

METHODS = ("wf", "iht")
DIVERGENCE_FACTOR = 1e6


@dataclass
class BaselineConfig:
    method: str = "iht"
    step_mu: float = 0.1
    max_iters: int = 2000
    s: int = None
    alpha: float = 0.5
    tol_residual: float = 1e-12
    tol_stagnation: float = 1e-14

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.step_mu > 0:
            raise ValueError("step_mu must be positive")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.method == "iht" and self.s is None:
            raise ValueError("the iht proxy needs a sparsity level s")


def _descend(ens, y, x0, config, project, method, x_true):
    x = check_vector(x0, ens.n, "x0").copy()
    nx0 = float(x @ x)
    if nx0 == 0:
        raise DegenerateInputError("x0 = 0 is a stationary point of the objective")
    mu = config.step_mu / nx0
    track = None if x_true is None else np.asarray(x_true, dtype=np.float64)
    trace = SolveTrace(method=method)
    obj0 = None
    k = 0
    while True:
        U, r = _linearize(ens, y, x)
        obj = float(r @ r) / (2 * ens.m)
        obj0 = obj if obj0 is None else obj0
        trace.add(k, obj, np.flatnonzero(x), "init" if k == 0 else "gradient",
                  rel_error=None if track is None else _rel_error(x, track))
        if not np.isfinite(obj) or obj > DIVERGENCE_FACTOR * max(obj0, np.finfo(float).tiny):
            trace.status, trace.message = "diverged", "objective blew up"
            break
        if obj <= config.tol_residual:
            trace.status = "converged"
            break
        if k >= config.max_iters:
            trace.status = "max_iters"
            break
        x_new = project(x - mu * ((r @ U) / ens.m))
        moved = float(np.linalg.norm(x_new - x))
        x, k = x_new, k + 1
        if moved <= config.tol_stagnation * float(np.linalg.norm(x)):
            trace.status = "stagnated"
            U, r = _linearize(ens, y, x)
            obj = float(r @ r) / (2 * ens.m)
            trace.add(k, obj, np.flatnonzero(x), "gradient",
                      rel_error=None if track is None else _rel_error(x, track))
            if obj <= config.tol_residual:
                trace.status = "converged"
            break
    return x, trace


def wf_solve(ens, y, x0, config: BaselineConfig = None, x_true=None):
    """Plain gradient descent x <- x - (step_mu / ||x0||^2) grad f(x)."""
    config = config or BaselineConfig(method="wf")
    ens, y = check_measurement_problem(ens, y)
    return _descend(ens, y, x0, config, lambda v: v, "wf_proxy", x_true)


def iht_solve(ens, y, x0, config: BaselineConfig, x_true=None):
    """Thresholded gradient descent x <- H_s(x - (step_mu / ||x0||^2) grad f(x))."""
    ens, y = check_measurement_problem(ens, y)
    s = check_sparsity(config.s, ens.n)
    return _descend(ens, y, x0, config, lambda v: hard_threshold(v, s), "iht_proxy", x_true)


def tsi_support(marg, phi: float, m: int, alpha: float) -> np.ndarray:
    """{j : Y_jj > alpha * phi^2 * sqrt(log n / m)}, or the top marginal if empty."""
    marg = np.asarray(marg, dtype=np.float64)
    n = marg.size
    threshold = alpha * phi**2 * np.sqrt(np.log(n) / m)
    S = np.flatnonzero(marg > threshold)
    if S.size == 0:
        S = np.array([int(np.argmax(marg))])
    return S


def tsi_init(ens, y, alpha: float = 0.5, convention: str = "mean") -> InitResult:
    """Thresholded spectral initialization (support by a marginal threshold)."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    ens, y = check_measurement_problem(ens, y)
    marg = (y @ ens.diagonals()) / ens.m
    phi = norm_estimate(y, ens.m, convention)
    S = tsi_support(marg, phi, ens.m, alpha)
    v, iters, fell_back = restricted_spectral(ens, y, S, return_info=True)
    return InitResult(phi * v, S, phi, marg, iters, fell_back)
