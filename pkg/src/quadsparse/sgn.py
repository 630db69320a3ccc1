"""Sparse Gauss-Newton refinement.

Each iteration picks a support by one hard-thresholded gradient step,
S = supp(H_s(x - mu * grad f(x))), then takes a Gauss-Newton step for the
residuals F_i(z) = (z^T A_i z - y_i) / sqrt(m) restricted to S, writing exact
zeros everywhere off S.

Everything is computed from the single product U[i] = (A_i + A_i^T) x:

    z^T A_i z   = <U[i], x> / 2
    J(x)        = U / sqrt(m)
    grad f(x)   = J^T F = (1/m) sum_i r_i U[i]
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .metrics import rel_error as _rel_error
from .validation import check_measurement_problem, check_sparsity, check_vector

log = logging.getLogger(__name__)

# mu * ||x||^2 must lie in this window for the contraction argument to go
# through; AUTO_STEP sits near its middle.
STEP_WINDOW = (0.303, 0.344)
AUTO_STEP = 0.32

STATUSES = ("converged", "max_iters", "stagnated", "numerical_failure")


class DegenerateInputError(ValueError):
    """The starting point carries no information (e.g. x0 = 0)."""


class NumericalFailure(ArithmeticError):
    """The restricted normal equations could not be solved, even with jitter."""


@dataclass
class SolverConfig:
    s: int
    step_mu: Union[float, str] = "auto"
    max_iters: int = 200
    tol_residual: float = 1e-12
    tol_stagnation: float = 1e-14
    jitter: float = 1e-10

    def __post_init__(self):
        if self.step_mu != "auto" and not (isinstance(self.step_mu, (int, float)) and self.step_mu > 0):
            raise ValueError(f"step_mu must be positive or 'auto', got {self.step_mu!r}")
        if self.max_iters < 0:
            raise ValueError("max_iters must be nonnegative")
        for name in ("tol_residual", "tol_stagnation", "jitter"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def step_size(self, scale_sq: float) -> float:
        """Absolute step: (normalized step) / scale_sq, scale = ||x0|| ~ phi."""
        c = AUTO_STEP if self.step_mu == "auto" else float(self.step_mu)
        return c / scale_sq


@dataclass
class IterateState:
    x: np.ndarray
    support: np.ndarray
    k: int = 0
    residual_norm: float = float("nan")
    grad_norm_restricted: float = float("nan")
    jitter_applied: bool = False

    @classmethod
    def start(cls, x0) -> "IterateState":
        x0 = np.asarray(x0, dtype=np.float64).copy()
        return cls(x0, np.flatnonzero(x0))


@dataclass
class SolveTrace:
    records: list = field(default_factory=list)
    status: str = "running"
    message: str = ""
    method: str = "sgn"

    @property
    def iterations(self) -> int:
        return max(0, len(self.records) - 1)

    def rel_errors(self) -> np.ndarray:
        return np.array([r.get("rel_error", np.nan) for r in self.records], dtype=float)

    def add(self, k, objective, support, step_kind, jitter_applied=False, rel_error=None):
        rec = {
            "k": int(k),
            "objective": float(objective),
            "residual_norm": float(np.sqrt(2.0 * objective)),
            "support": [int(j) for j in support],
            "step_kind": step_kind,
            "jitter_applied": bool(jitter_applied),
        }
        if rel_error is not None:
            rec["rel_error"] = float(rel_error)
        self.records.append(rec)

    def summary(self) -> dict:
        last = self.records[-1] if self.records else {}
        out = {
            "method": self.method,
            "status": self.status,
            "iterations": self.iterations,
            "objective": last.get("objective"),
            "residual_norm": last.get("residual_norm"),
        }
        if "rel_error" in last:
            out["rel_error"] = last["rel_error"]
        if self.message:
            out["message"] = self.message
        return out

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def to_dict(self) -> dict:
        return asdict(self)


def _linearize(ens, y, x):
    """U = [(A_i + A_i^T) x]_i and the raw residuals r_i = x^T A_i x - y_i."""
    U = ens.sym_apply(x)
    r = 0.5 * (U @ x) - y
    return U, r


def gradient(ens, y, z) -> np.ndarray:
    """(1/m) sum_i (z^T A_i z - y_i) (A_i + A_i^T) z."""
    ens, y = check_measurement_problem(ens, y)
    z = check_vector(z, ens.n)
    U, r = _linearize(ens, y, z)
    return (r @ U) / ens.m


def hard_threshold(v, s: int) -> np.ndarray:
    """Keep the s largest-magnitude entries (ties to the lowest index)."""
    v = np.asarray(v, dtype=np.float64)
    s = check_sparsity(s, v.size)
    keep = np.argsort(-np.abs(v), kind="stable")[:s]
    out = np.zeros_like(v)
    out[keep] = v[keep]
    return out


def _threshold_support(u, s):
    return np.flatnonzero(hard_threshold(u, s))


def select_support(ens, y, state, mu: float, s: int) -> np.ndarray:
    """supp(H_s(x - mu * grad f(x))); may be smaller than s (zeros are dropped)."""
    if mu <= 0:
        raise ValueError("step size must be positive")
    x = state.x if isinstance(state, IterateState) else np.asarray(state, dtype=np.float64)
    return _threshold_support(x - mu * gradient(ens, y, x), s)


def jacobian_apply(ens, z, S) -> np.ndarray:
    """Columns S of J(z): row i is (A_i + A_i^T) z / sqrt(m), restricted to S."""
    z = np.asarray(z, dtype=np.float64)
    S = np.asarray(S, dtype=np.intp)
    return ens.sym_apply(z)[:, S] / np.sqrt(ens.m)


def _solve_normal(JS, rhs, jitter):
    G = JS.T @ JS
    try:
        return cho_solve(cho_factor(G, lower=True, check_finite=True), rhs), False
    except (LinAlgError, ValueError):
        pass
    bump = jitter * float(np.max(np.diag(G), initial=0.0))
    try:
        p = cho_solve(cho_factor(G + bump * np.eye(G.shape[0]), lower=True), rhs)
    except (LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"normal matrix is not positive definite even with jitter {bump:.3e}") from exc
    return p, True


def _direction_from(U, r, x, S, m, jitter):
    sq = np.sqrt(m)
    JS = U[:, S] / sq
    F = r / sq
    T = np.flatnonzero(x)
    out = np.setdiff1d(T, S, assume_unique=True)
    if out.size:
        F = F - (U[:, out] @ x[out]) / sq
    p, jittered = _solve_normal(JS, JS.T @ F, jitter)
    if not np.all(np.isfinite(p)):
        raise NumericalFailure("Gauss-Newton direction is not finite")
    full = np.zeros_like(x)
    full[S] = p
    return full, jittered


def gn_direction(ens, y, state, S_next, jitter: float = 1e-10) -> np.ndarray:
    """Solve J_S^T J_S p = grad_S f(x) - J_S^T J_{S^c} x_{S^c}; p lives on S_next."""
    ens, y = check_measurement_problem(ens, y)
    x = state.x if isinstance(state, IterateState) else check_vector(state, ens.n)
    S = np.asarray(S_next, dtype=np.intp)
    if S.size == 0:
        return np.zeros(ens.n)
    U, r = _linearize(ens, y, x)
    return _direction_from(U, r, x, S, ens.m, jitter)[0]


def _advance(ens, y, state, mu, config, U=None, r=None):
    x = state.x
    if U is None:
        U, r = _linearize(ens, y, x)
    grad = (r @ U) / ens.m
    S = _threshold_support(x - mu * grad, config.s)
    if S.size == 0:
        return None
    p, jittered = _direction_from(U, r, x, S, ens.m, config.jitter)
    x_new = np.zeros_like(x)
    x_new[S] = x[S] - p[S]
    return IterateState(
        x_new, S, state.k + 1,
        residual_norm=float(np.linalg.norm(r)) / np.sqrt(ens.m),
        grad_norm_restricted=float(np.linalg.norm(grad[S])),
        jitter_applied=jittered,
    )


def step(ens, y, state, config: SolverConfig, mu: Optional[float] = None) -> IterateState:
    """One iteration: support selection then the restricted Gauss-Newton update.

    ``mu`` defaults to the config's step normalized by ||x^k||^2.
    """
    ens, y = check_measurement_problem(ens, y)
    if not isinstance(state, IterateState):
        state = IterateState.start(check_vector(state, ens.n))
    if mu is None:
        nx = float(state.x @ state.x)
        if nx == 0:
            raise DegenerateInputError("cannot pick a step size at x = 0")
        mu = config.step_size(nx)
    new = _advance(ens, y, state, mu, config)
    if new is None:
        raise DegenerateInputError("thresholded gradient step is identically zero")
    return new


def solve(ens, y, x0, config: SolverConfig, x_true=None):
    """Run the refinement from ``x0``; returns ``(x, SolveTrace)``.

    Stops when the objective drops to ``tol_residual`` (converged), when an
    update moves the iterate by at most ``tol_stagnation * ||x||``
    (stagnated), or after ``max_iters`` updates. ``x_true`` only feeds the
    per-iteration relative errors recorded in the trace.
    """
    ens, y = check_measurement_problem(ens, y)
    x0 = check_vector(x0, ens.n, "x0")
    check_sparsity(config.s, ens.n)
    nx0 = float(x0 @ x0)
    if nx0 == 0:
        raise DegenerateInputError("x0 = 0 is a stationary point (the Jacobian vanishes)")
    mu = config.step_size(nx0)
    track = None if x_true is None else np.asarray(x_true, dtype=np.float64)

    trace = SolveTrace(method="sgn")
    state = IterateState.start(x0)
    jittered = False
    while True:
        U, r = _linearize(ens, y, state.x)
        obj = float(r @ r) / (2 * ens.m)
        trace.add(state.k, obj, np.flatnonzero(state.x), "init" if state.k == 0 else "gn",
                  jittered, None if track is None else _rel_error(state.x, track))
        if obj <= config.tol_residual:
            trace.status = "converged"
            break
        if state.k >= config.max_iters:
            trace.status = "max_iters"
            break
        try:
            new = _advance(ens, y, state, mu, config, U, r)
        except NumericalFailure as exc:
            trace.status, trace.message = "numerical_failure", str(exc)
            break
        if new is None:
            trace.status, trace.message = "stagnated", "empty support after thresholding"
            break
        moved = float(np.linalg.norm(new.x - state.x))
        jittered = new.jitter_applied
        state = new
        if moved <= config.tol_stagnation * float(np.linalg.norm(state.x)):
            U, r = _linearize(ens, y, state.x)
            obj = float(r @ r) / (2 * ens.m)
            trace.add(state.k, obj, state.support, "gn", jittered,
                      None if track is None else _rel_error(state.x, track))
            trace.status = "converged" if obj <= config.tol_residual else "stagnated"
            break
    log.debug("sgn finished: %s after %d iterations", trace.status, trace.iterations)
    return state.x, trace
