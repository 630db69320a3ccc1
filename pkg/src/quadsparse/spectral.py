"""Support-restricted spectral initialization.

The estimate is built in four moves: rank coordinates by the signal marginals
Y_jj = (1/m) sum_i y_i A_i[j, j], keep the s largest, take the leading left
singular vector of the restricted average (1/m) sum_i y_i A_i[S, S] and scale
it to the norm estimate phi.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .validation import check_index_set, check_measurement_problem, check_observations

# Divisor applied to sum(y_i^2) / m before the fourth root. E[y_i^2] = ||x||^4
# for standard Gaussian A_i, so "mean" is unbiased in the fourth power;
# "half_mean" reproduces the 1/(2m) normalization as an opt-in.
PHI_CONVENTIONS = {"mean": 1.0, "half_mean": 2.0}


class SpectralConvergenceError(ArithmeticError):
    """Power iteration hit its iteration cap without meeting the tolerance."""

    def __init__(self, residual: float, iterations: int):
        super().__init__(
            f"power iteration did not converge in {iterations} iterations "
            f"(eigen-residual {residual:.3e})"
        )
        self.residual = residual
        self.iterations = iterations


@dataclass
class InitResult:
    x0: np.ndarray
    support_hat: np.ndarray
    phi: float
    marginals: np.ndarray
    power_iters_used: int
    used_fallback: bool = False

    def to_dict(self) -> dict:
        return {
            "x0": self.x0.tolist(),
            "support_hat": self.support_hat.tolist(),
            "phi": float(self.phi),
            "marginals": self.marginals.tolist(),
            "power_iters_used": int(self.power_iters_used),
            "used_fallback": bool(self.used_fallback),
        }


def marginals(ens, y) -> np.ndarray:
    """Y_jj = (1/m) sum_i y_i A_i[j, j] for every coordinate j."""
    ens, y = check_measurement_problem(ens, y)
    return (y @ ens.diagonals()) / ens.m


def select_support(values, s: int) -> np.ndarray:
    """Sorted indices of the ``s`` largest values; ties go to the lowest index."""
    values = np.asarray(values, dtype=np.float64)
    if not 1 <= s <= values.size:
        raise ValueError(f"need 1 <= s <= {values.size}, got {s}")
    order = np.argsort(-values, kind="stable")
    return np.sort(order[:s])


def _fix_sign(v: np.ndarray) -> np.ndarray:
    j = int(np.argmax(np.abs(v)))
    return -v if v[j] < 0 else v


def leading_left_singular_vector(M, tol: float = 1e-10, max_iter=None, fallback: str = "svd"):
    """Power iteration on ``M M^T`` from the normalized all-ones vector.

    Returns ``(u, iterations, used_fallback)``. Stops once successive iterates
    differ by at most ``tol``; the default cap is ``10 * k + 100`` iterations.
    On hitting the cap, ``fallback="svd"`` switches to a dense SVD and
    ``fallback=None`` raises :class:`SpectralConvergenceError`.
    """
    M = np.asarray(M, dtype=np.float64)
    k = M.shape[0]
    if max_iter is None:
        max_iter = 10 * k + 100
    G = M @ M.T
    v = np.full(k, 1.0 / np.sqrt(k))
    for it in range(1, max_iter + 1):
        w = G @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # M = 0: every unit vector is a singular vector
            return _fix_sign(v), it, False
        w /= nw
        if np.linalg.norm(w - v) <= tol:
            return _fix_sign(w), it, False
        v = w
    if fallback == "svd":
        u = np.linalg.svd(M)[0][:, 0]
        return _fix_sign(u), max_iter, True
    Gv = G @ v
    raise SpectralConvergenceError(float(np.linalg.norm(Gv - (v @ Gv) * v)), max_iter)


def restricted_matrix(ens, y, S) -> np.ndarray:
    ens, y = check_measurement_problem(ens, y)
    S = check_index_set(S, ens.n)
    return np.tensordot(y, ens.block(S), axes=1) / ens.m


def restricted_spectral(ens, y, S, tol: float = 1e-10, max_iter=None, fallback: str = "svd",
                        return_info: bool = False):
    """Unit vector in R^n supported on S: the leading left singular vector of Y_S."""
    ens, y = check_measurement_problem(ens, y)
    S = check_index_set(S, ens.n)
    if S.size == 0:
        raise ValueError("restricted spectral step needs a nonempty index set")
    u, iters, fell_back = leading_left_singular_vector(
        restricted_matrix(ens, y, S), tol=tol, max_iter=max_iter, fallback=fallback
    )
    v = np.zeros(ens.n)
    v[S] = u
    if return_info:
        return v, iters, fell_back
    return v


def norm_estimate(y, m=None, convention: str = "mean") -> float:
    """phi = (sum_i y_i^2 / (c m))^(1/4), c = 1 ("mean") or 2 ("half_mean")."""
    y = np.asarray(y, dtype=np.float64).ravel()
    m = y.size if m is None else int(m)
    y = check_observations(y, m)
    try:
        c = PHI_CONVENTIONS[convention]
    except KeyError:
        raise ValueError(f"unknown phi convention {convention!r}; use one of {list(PHI_CONVENTIONS)}")
    return float((y @ y / (c * m)) ** 0.25)


def initialize(ens, y, s: int, convention: str = "mean", tol: float = 1e-10,
               max_iter=None, fallback: str = "svd") -> InitResult:
    ens, y, s = check_measurement_problem(ens, y, s)
    marg = (y @ ens.diagonals()) / ens.m
    S = select_support(marg, s)
    v, iters, fell_back = restricted_spectral(
        ens, y, S, tol=tol, max_iter=max_iter, fallback=fallback, return_info=True
    )
    phi = norm_estimate(y, ens.m, convention)
    return InitResult(phi * v, S, phi, marg, iters, fell_back)
