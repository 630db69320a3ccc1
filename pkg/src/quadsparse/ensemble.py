"""Measurement ensembles, sparse signals and (noisy) quadratic observations."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ._rng import RngSeed, Stream, as_seed, raw_words, scattered_words, words_to_normal

DEFAULT_MEMORY_CAP = 4 * 2**30
STORAGE_MODES = ("materialized", "streamed")
NOISE_KINDS = ("none", "gaussian", "laplace")

# Streamed mode regenerates at most this many entries at once.
_CHUNK_ENTRIES = 1 << 22
# Rough per-entry / per-word / per-call costs (seconds) used to choose
# between scattered and bulk generation.
_SCATTER_COST = 1.1e-6
_RANGE_COST = 2.5e-8
_RANGE_OVERHEAD = 6e-5


class CapacityError(MemoryError):
    """Raised when a materialized ensemble would exceed the memory cap."""


class MeasurementEnsemble:
    """The m matrices A_0..A_{m-1}, each n x n with i.i.d. N(0, 1) entries.

    In ``materialized`` mode the full ``(m, n, n)`` array is held in memory. In
    ``streamed`` mode nothing is stored: each request regenerates exactly the
    entries it needs from the seed, so memory stays O(m * n * |support|).
    Both modes return bit-identical values for the same seed.

    Matrices are indexed from 0.
    """

    def __init__(self, n: int, m: int, seed=None, mode: str = "materialized",
                 memory_cap: int = DEFAULT_MEMORY_CAP, _array=None):
        if int(n) < 1 or int(m) < 1:
            raise ValueError(f"n and m must be positive, got n={n}, m={m}")
        if mode not in STORAGE_MODES:
            raise ValueError(f"storage mode must be one of {STORAGE_MODES}, got {mode!r}")
        self.n = int(n)
        self.m = int(m)
        self.seed = None if seed is None else as_seed(seed)
        self.storage_mode = mode
        self._array = None
        if _array is not None:
            self._array = _array
        elif self.seed is None:
            raise ValueError("a seed is required unless an explicit array is given")
        elif mode == "materialized":
            nbytes = self.m * self.n * self.n * 8
            if nbytes > memory_cap:
                raise CapacityError(
                    f"materializing m={self.m} matrices of size {self.n}x{self.n} needs "
                    f"{nbytes / 2**30:.2f} GiB (cap {memory_cap / 2**30:.2f} GiB); "
                    "use mode='streamed'"
                )
            self._array = self._generate(0, self.m)
            self._array.flags.writeable = False

    @classmethod
    def from_array(cls, A) -> "MeasurementEnsemble":
        A = np.array(A, dtype=np.float64, copy=True)
        if A.ndim == 2 and A.shape[0] == A.shape[1]:
            A = A[None]
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ValueError(f"expected an (m, n, n) array of matrices, got shape {A.shape}")
        A.flags.writeable = False
        return cls(A.shape[2], A.shape[0], mode="materialized", _array=A)

    def __repr__(self):
        seed = None if self.seed is None else (self.seed.master_seed, self.seed.stream_id)
        return f"MeasurementEnsemble(n={self.n}, m={self.m}, seed={seed}, mode={self.storage_mode!r})"

    # -- generation -------------------------------------------------------

    def _generate(self, start: int, stop: int) -> np.ndarray:
        key = self.seed.key
        nn = self.n * self.n
        out = np.empty((stop - start, self.n, self.n))
        for j, i in enumerate(range(start, stop)):
            out[j] = words_to_normal(raw_words(key, i, nn)).reshape(self.n, self.n)
        return out

    def _chunks(self):
        step = max(1, _CHUNK_ENTRIES // (self.n * self.n))
        for start in range(0, self.m, step):
            stop = min(self.m, start + step)
            yield start, stop, self._generate(start, stop)

    def _gather(self, pos) -> np.ndarray:
        """Entries at flat positions ``pos`` (any shape) of every matrix: ``(m, *pos.shape)``.

        Chooses per request between scattered Philox evaluation and bulk
        generation of the covering word range, whichever is cheaper.
        """
        pos = np.asarray(pos, dtype=np.int64)
        key = self.seed.key
        flat = pos.ravel()
        if flat.size == 0:
            return np.empty((self.m,) + pos.shape)
        lo, hi = int(flat.min()), int(flat.max())
        if flat.size * _SCATTER_COST > (hi - lo + 1) * _RANGE_COST + _RANGE_OVERHEAD:
            words = np.empty((self.m, flat.size), dtype=np.uint64)
            for i in range(self.m):
                words[i] = raw_words(key, i, hi - lo + 1, lo)[flat - lo]
        else:
            words = scattered_words(key, np.arange(self.m)[:, None], flat[None, :])
        return words_to_normal(words).reshape((self.m,) + pos.shape)

    def entries(self, i, k, l) -> np.ndarray:
        """Entries ``A_i[k, l]`` for broadcast index arrays."""
        i, k, l = np.broadcast_arrays(np.asarray(i), np.asarray(k), np.asarray(l))
        if self._array is not None:
            return self._array[i, k, l]
        pos = k.astype(np.int64) * self.n + l.astype(np.int64)
        return words_to_normal(scattered_words(self.seed.key, i, pos))

    # -- access -----------------------------------------------------------

    def matrix(self, i: int) -> np.ndarray:
        if not 0 <= int(i) < self.m:
            raise IndexError(f"matrix index {i} out of range for m={self.m}")
        if self._array is not None:
            return self._array[int(i)]
        return self._generate(int(i), int(i) + 1)[0]

    def dense(self) -> np.ndarray:
        """All matrices as an ``(m, n, n)`` array (generated if streamed)."""
        if self._array is not None:
            return self._array
        return self._generate(0, self.m)

    def diagonals(self) -> np.ndarray:
        """``D[i, j] = A_i[j, j]``, shape ``(m, n)``."""
        if self._array is not None:
            return np.diagonal(self._array, axis1=1, axis2=2).copy()
        j = np.arange(self.n)
        return self._gather(j * self.n + j)

    def block(self, S) -> np.ndarray:
        """The principal sub-blocks ``A_i[S, S]``, shape ``(m, |S|, |S|)``."""
        S = np.asarray(S, dtype=np.intp)
        if self._array is not None:
            return self._array[:, S[:, None], S[None, :]]
        return self._gather(S[:, None] * self.n + S[None, :])

    def quad(self, z) -> np.ndarray:
        """``q_i = z^T A_i z`` for every i."""
        z = np.asarray(z, dtype=np.float64)
        T = np.flatnonzero(z)
        if T.size == 0:
            return np.zeros(self.m)
        if self._array is not None and 2 * T.size > self.n:
            return np.matmul(self._array, z) @ z
        if self._array is None and 2 * T.size > self.n:
            out = np.empty(self.m)
            for start, stop, A in self._chunks():
                out[start:stop] = np.matmul(A, z) @ z
            return out
        zT = z[T]
        return np.einsum("ikl,k,l->i", self.block(T), zT, zT)

    def sym_apply(self, z) -> np.ndarray:
        """``U[i] = (A_i + A_i^T) z``, shape ``(m, n)``."""
        z = np.asarray(z, dtype=np.float64)
        T = np.flatnonzero(z)
        if T.size == 0:
            return np.zeros((self.m, self.n))
        if self._array is not None:
            A = self._array
            if 2 * T.size > self.n:
                return np.matmul(A, z) + np.matmul(z, A)
            zT = z[T]
            return A[:, :, T] @ zT + np.matmul(zT, A[:, T, :])
        if 4 * T.size > self.n:
            out = np.empty((self.m, self.n))
            for start, stop, A in self._chunks():
                out[start:stop] = np.matmul(A, z) + np.matmul(z, A)
            return out
        zT = z[T]
        cols = np.arange(self.n)[None, :]
        rows = self._gather(T[:, None] * self.n + cols)   # A_i[t, :]
        colsT = self._gather(cols * self.n + T[:, None])  # A_i[:, t]
        return np.einsum("t,itn->in", zT, rows + colsT)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "seed": None if self.seed is None else self.seed.to_dict(),
            "storage_mode": self.storage_mode,
        }


@dataclass(frozen=True)
class SparseSignal:
    values: np.ndarray
    support: tuple
    s: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        support = tuple(sorted(int(j) for j in self.support))
        if len(support) > self.s:
            raise ValueError(f"support of size {len(support)} exceeds sparsity bound s={self.s}")
        off = np.ones(values.size, dtype=bool)
        off[list(support)] = False
        if np.any(values[off] != 0):
            raise ValueError("signal has nonzero entries off its support")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "support", support)

    @classmethod
    def from_vector(cls, values, s: Optional[int] = None) -> "SparseSignal":
        values = np.asarray(values, dtype=np.float64)
        support = tuple(np.flatnonzero(values))
        return cls(values, support, len(support) if s is None else int(s))

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def x_min(self) -> float:
        """Smallest nonzero magnitude (0 for the zero signal)."""
        if not self.support:
            return 0.0
        return float(np.min(np.abs(self.values[list(self.support)])))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def to_dict(self) -> dict:
        return {"n": self.n, "s": self.s, "support": list(self.support),
                "values": self.values.tolist()}


@dataclass(frozen=True)
class NoiseSpec:
    """Additive noise model. ``sigma`` is the standard deviation for both kinds."""

    kind: str = "none"
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if self.kind == "none" and self.sigma != 0:
            raise ValueError("noise kind 'none' requires sigma = 0")

    def sample(self, size: int, seed) -> np.ndarray:
        if self.kind == "none":
            return np.zeros(size)
        stream = Stream(seed)
        if self.kind == "gaussian":
            return self.sigma * stream.normal(size)
        return stream.laplace(size, scale=self.sigma / np.sqrt(2.0))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sigma": float(self.sigma)}


@dataclass(frozen=True)
class Observations:
    y: np.ndarray
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    clean_y: Optional[np.ndarray] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64).ravel()
        object.__setattr__(self, "y", y)
        if self.clean_y is not None:
            object.__setattr__(self, "clean_y", np.asarray(self.clean_y, dtype=np.float64).ravel())

    @property
    def m(self) -> int:
        return self.y.size

    def to_dict(self) -> dict:
        return {
            "y": self.y.tolist(),
            "noise": self.noise.to_dict(),
            "clean_y": None if self.clean_y is None else self.clean_y.tolist(),
        }


def gen_ensemble(n: int, m: int, seed, mode: str = "materialized",
                 memory_cap: int = DEFAULT_MEMORY_CAP) -> MeasurementEnsemble:
    return MeasurementEnsemble(n, m, seed, mode=mode, memory_cap=memory_cap)


def gen_signal(n: int, s: int, seed) -> SparseSignal:
    """Uniformly random size-s support with i.i.d. N(0, 1) values on it."""
    n, s = int(n), int(s)
    if n < 1 or not 1 <= s <= n:
        raise ValueError(f"need 1 <= s <= n, got s={s}, n={n}")
    stream = Stream(seed)
    keys = stream.uniform(n)
    support = np.sort(np.argsort(keys, kind="stable")[:s])
    values = np.zeros(n)
    values[support] = stream.normal(s)
    return SparseSignal(values, tuple(support), s)


def measure(ens: MeasurementEnsemble, x, noise: NoiseSpec = NoiseSpec(), seed=None) -> Observations:
    x = x.values if isinstance(x, SparseSignal) else np.asarray(x, dtype=np.float64)
    if x.shape != (ens.n,):
        raise ValueError(f"signal has shape {x.shape}, ensemble expects ({ens.n},)")
    clean = ens.quad(x)
    if noise.kind != "none" and seed is None:
        raise ValueError("a seed is required to draw noise")
    eps = noise.sample(ens.m, seed) if noise.kind != "none" else 0.0
    return Observations(clean + eps, noise, clean)


def objective(ens: MeasurementEnsemble, y, z) -> float:
    """Least-squares misfit (1/2m) * sum_i (z^T A_i z - y_i)^2."""
    y = y.y if isinstance(y, Observations) else np.asarray(y, dtype=np.float64)
    r = ens.quad(z) - y
    return float(r @ r) / (2 * ens.m)


# -- serialization ---------------------------------------------------------

def save_vector_csv(path, values, header=("index", "value")) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for j, v in enumerate(np.asarray(values, dtype=np.float64)):
            writer.writerow([j, repr(float(v))])


def load_vector_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = np.zeros(len(rows))
    for row in rows:
        out[int(row["index"])] = float(row["value"])
    return out


def save_observations_csv(path, obs: Observations) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "y", "clean_y"])
        clean = obs.clean_y if obs.clean_y is not None else [None] * obs.m
        for i, (yi, ci) in enumerate(zip(obs.y, clean)):
            writer.writerow([i, repr(float(yi)), "" if ci is None else repr(float(ci))])


def load_observations_csv(path, noise: NoiseSpec = NoiseSpec()) -> Observations:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    y = np.array([float(r["y"]) for r in rows])
    clean = None
    if rows and all(r["clean_y"] != "" for r in rows):
        clean = np.array([float(r["clean_y"]) for r in rows])
    return Observations(y, noise, clean)


def dump_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


__all__ = [
    "CapacityError", "MeasurementEnsemble", "NoiseSpec", "Observations", "RngSeed",
    "SparseSignal", "gen_ensemble", "gen_signal", "measure", "objective",
    "save_vector_csv", "load_vector_csv", "save_observations_csv", "load_observations_csv",
    "dump_json",
]
