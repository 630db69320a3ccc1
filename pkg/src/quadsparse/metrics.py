"""Sign-invariant error measures and the trial success predicate."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

SUCCESS_THRESHOLD = 1e-3


def _pair(xhat, x):
    xhat = np.asarray(xhat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if xhat.shape != x.shape:
        raise ValueError(f"length mismatch: {xhat.shape} vs {x.shape}")
    return xhat, x


def dist(xhat, x) -> float:
    """min(||xhat - x||, ||xhat + x||); quadratic measurements cannot see the sign."""
    xhat, x = _pair(xhat, x)
    return float(min(np.linalg.norm(xhat - x), np.linalg.norm(xhat + x)))


def rel_error(xhat, x) -> float:
    xhat, x = _pair(xhat, x)
    nx = np.linalg.norm(x)
    if nx == 0:
        raise ZeroDivisionError("relative error is undefined for a zero ground truth")
    return dist(xhat, x) / float(nx)


def support_of(v, atol: float = 0.0) -> frozenset:
    return frozenset(int(j) for j in np.flatnonzero(np.abs(np.asarray(v)) > atol))


def support_match(xhat, x, atol: float = 0.0) -> bool:
    """Exact support equality; ``atol`` > 0 treats tiny entries as zero."""
    return support_of(xhat, atol) == support_of(x, atol)


@dataclass
class TrialOutcome:
    rel_error: float
    dist: float
    iterations: int
    support_exact: bool
    success: bool
    wall_time: float
    status: str = "converged"

    @classmethod
    def evaluate(cls, xhat, x, iterations=0, wall_time=0.0, status="converged",
                 success_threshold=SUCCESS_THRESHOLD) -> "TrialOutcome":
        if not np.all(np.isfinite(xhat)):
            return cls(float("inf"), float("inf"), iterations, False, False, wall_time, status)
        err = rel_error(xhat, x)
        return cls(err, dist(xhat, x), int(iterations), support_match(xhat, x),
                   bool(err < success_threshold), float(wall_time), status)

    def to_dict(self) -> dict:
        return asdict(self)
