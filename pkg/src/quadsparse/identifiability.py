"""Empirical probes of uniqueness for sparse quadratic measurements (real case).

For s = 1 injectivity can be decided exactly: M(t e_j) = t^2 d_j with
d_j = (A_1[j, j], ..., A_m[j, j]), so two 1-sparse signals collide iff some
d_j vanishes or two of them are positive multiples of each other. For larger
s, :func:`collision_search` looks for pairs x != +-z with M(x) = M(z) by
Gauss-Newton from random starts. A failed search is evidence, not proof.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._rng import Stream, as_seed, derive_master
from .metrics import dist
from .validation import check_ensemble, check_index_set

COLLINEAR_TOL = 1e-12


def s1_injectivity_check(ens, tol: float = COLLINEAR_TOL):
    """Decide injectivity on 1-sparse signals.

    Returns ``(injective, certificate)``. When injectivity fails the
    certificate names the offending coordinate(s) and carries an explicit
    colliding pair ``x``, ``z``.
    """
    ens = check_ensemble(ens)
    D = ens.diagonals()  # (m, n); column j is d_j
    norms = np.linalg.norm(D, axis=0)
    n = ens.n
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        j = int(zero[0])
        x = np.zeros(n)
        x[j] = 1.0
        return False, {"injective": False, "reason": "zero_diagonal", "pair": [j],
                       "x": x.tolist(), "z": np.zeros(n).tolist()}
    U = D / norms
    for j in range(n - 1):
        rest = U[:, j + 1:]
        cos = U[:, j] @ rest
        orth = np.linalg.norm(rest - np.outer(U[:, j], cos), axis=0)
        hits = np.flatnonzero((orth <= tol) & (cos > 0))
        if hits.size:
            k = j + 1 + int(hits[0])
            ratio = float(norms[k] / norms[j])  # d_k = ratio * d_j
            x = np.zeros(n)
            z = np.zeros(n)
            x[j] = 1.0
            z[k] = 1.0 / np.sqrt(ratio)
            return False, {"injective": False, "reason": "proportional_diagonals",
                           "pair": [j, k], "ratio": ratio, "x": x.tolist(), "z": z.tolist()}
    return True, {"injective": True, "reason": None, "pairs_checked": n * (n - 1) // 2,
                  "tolerance": tol}


@dataclass
class CollisionReport:
    found: bool
    x: np.ndarray
    z: np.ndarray
    residual: float
    separation: float
    supports: tuple
    attempts: int
    budget: int = 0
    candidates: int = field(default=0)

    def to_dict(self) -> dict:
        return {
            "found": bool(self.found),
            "x": np.asarray(self.x).tolist(),
            "z": np.asarray(self.z).tolist(),
            "residual": float(self.residual),
            "separation": float(self.separation),
            "supports": [list(map(int, self.supports[0])), list(map(int, self.supports[1]))],
            "attempts": int(self.attempts),
            "budget": int(self.budget),
            "candidates": int(self.candidates),
        }


def measurement_gap(ens, x, z) -> float:
    """||M(x) - M(z)||, evaluated directly on the ensemble."""
    return float(np.linalg.norm(ens.quad(x) - ens.quad(z)))


def _refine(AI, AJ, x, z, max_iters, tol):
    """Gauss-Newton on [M_I(x) - M_J(z); ||x||^2 + ||z||^2 - 2] = 0 (min-norm steps)."""
    SI = AI + AI.transpose(0, 2, 1)
    SJ = AJ + AJ.transpose(0, 2, 1)
    for _ in range(max_iters):
        r = np.concatenate([
            np.einsum("ikl,k,l->i", AI, x, x) - np.einsum("ikl,k,l->i", AJ, z, z),
            [x @ x + z @ z - 2.0],
        ])
        J = np.vstack([
            np.hstack([SI @ x, -(SJ @ z)]),
            np.concatenate([2 * x, 2 * z])[None, :],
        ])
        delta = np.linalg.lstsq(J, r, rcond=None)[0]
        x = x - delta[: x.size]
        z = z - delta[x.size:]
        if np.linalg.norm(delta) <= tol:
            break
    return x, z


def collision_search(ens, s: int, I=None, J=None, seed=0, budget: int = 50,
                     collision_tol: float = 1e-8, sep_tol: float = 1e-3,
                     max_iters: int = 60, starts=None) -> CollisionReport:
    """Search for x != +-z with supp(x) in I, supp(z) in J and M(x) = M(z).

    Pairs are normalized to ||x||^2 + ||z||^2 = 2 (collisions are invariant
    under common scaling). When ``I`` or ``J`` is omitted, every start draws
    a fresh uniformly random support of size ``s``. Explicit ``starts`` (a
    list of ``(x0, z0)`` pairs of length ``|I|``, ``|J|``) replace the random
    ones. Stops at the first verified collision.
    """
    ens = check_ensemble(ens)
    n = ens.n
    if I is not None:
        I = check_index_set(I, n)
        if I.size > s:
            raise ValueError(f"|I| = {I.size} exceeds s = {s}")
    if J is not None:
        J = check_index_set(J, n)
        if J.size > s:
            raise ValueError(f"|J| = {J.size} exceeds s = {s}")
    seed = as_seed(seed)
    n_starts = budget if starts is None else len(starts)

    best = None
    candidates = 0
    for b in range(n_starts):
        stream = Stream((derive_master(seed.master_seed, seed.stream_id, b), 0))
        Ib = I if I is not None else np.sort(np.argsort(stream.uniform(n), kind="stable")[:s])
        Jb = J if J is not None else np.sort(np.argsort(stream.uniform(n), kind="stable")[:s])
        if starts is None:
            x0 = stream.normal(Ib.size)
            z0 = stream.normal(Jb.size)
        else:
            x0, z0 = (np.asarray(v, dtype=np.float64) for v in starts[b])
        scale = np.sqrt(2.0 / (x0 @ x0 + z0 @ z0))
        xI, zJ = _refine(ens.block(Ib), ens.block(Jb), x0 * scale, z0 * scale, max_iters, 1e-15)
        x = np.zeros(n)
        z = np.zeros(n)
        x[Ib] = xI
        z[Jb] = zJ
        residual = measurement_gap(ens, x, z)
        separation = dist(x, z)
        if not np.isfinite(residual) or separation < sep_tol:
            continue
        candidates += 1
        if best is None or residual < best[0]:
            best = (residual, separation, x, z, (Ib, Jb))
        if residual <= collision_tol:
            return CollisionReport(True, x, z, residual, separation, (Ib, Jb), b + 1,
                                   n_starts, candidates)
    if best is None:
        empty = np.zeros(n)
        return CollisionReport(False, empty, empty, float("inf"), 0.0,
                               (np.array([], int), np.array([], int)), n_starts, n_starts, 0)
    residual, separation, x, z, supports = best
    return CollisionReport(False, x, z, residual, separation, supports, n_starts,
                           n_starts, candidates)
