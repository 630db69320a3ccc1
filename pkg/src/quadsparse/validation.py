"""Input checks shared by the functional API and the estimators."""
from __future__ import annotations

import numbers

import numpy as np

from .ensemble import MeasurementEnsemble, Observations


def check_ensemble(A) -> MeasurementEnsemble:
    """Accept a MeasurementEnsemble or an ``(m, n, n)`` array-like."""
    if isinstance(A, MeasurementEnsemble):
        return A
    return MeasurementEnsemble.from_array(A)


def check_observations(y, m: int) -> np.ndarray:
    if isinstance(y, Observations):
        y = y.y
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.size != m:
        raise ValueError(f"got {y.size} observations for an ensemble of {m} matrices")
    if not np.all(np.isfinite(y)):
        raise ValueError("observations contain NaN or infinity")
    return y


def check_vector(z, n: int, name: str = "z") -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError(f"{name} contains NaN or infinity")
    return z


def check_sparsity(s, n: int) -> int:
    if not isinstance(s, numbers.Integral) or isinstance(s, bool):
        raise TypeError(f"sparsity must be an integer, got {s!r}")
    if not 1 <= s <= n:
        raise ValueError(f"sparsity must satisfy 1 <= s <= n={n}, got {s}")
    return int(s)


def check_index_set(S, n: int) -> np.ndarray:
    S = np.unique(np.asarray(S, dtype=np.intp).ravel())
    if S.size and (S[0] < 0 or S[-1] >= n):
        raise IndexError(f"index set {S.tolist()} out of range for n={n}")
    return S


def check_measurement_problem(A, y, s=None):
    """Validate an (ensemble, observations[, sparsity]) triple in one go."""
    ens = check_ensemble(A)
    y = check_observations(y, ens.m)
    if s is None:
        return ens, y
    return ens, y, check_sparsity(s, ens.n)
