"""Seed derivation and the counter-based normal generator.

Every random draw in the package comes from Philox4x64-10 (the counter-based
generator shipped as ``numpy.random.Philox``) keyed by a 128-bit key:

    key(master_seed, stream_id) = first 16 bytes (little endian) of
        SHA-256(b"quadsparse/rng/v1" || u64le(master_seed) || u64le(stream_id))

Raw 64-bit words are turned into doubles with

    u = ((w >> 12) + 0.5) * 2**-52          (exact, strictly inside (0, 1))
    z = ndtri(u)                            (inverse normal CDF)

so the mapping from seed to floating point values depends only on Philox,
SHA-256 and ``scipy.special.ndtri``, never on a library's default sampler.

Measurement matrices are addressable per entry: entry ``e = k * n + l`` of
matrix ``i`` is word ``e % 4`` of the Philox block with counter
``(e // 4 + 1, i, 0, 0)``. Bulk generation goes through numpy's C
implementation; scattered entries go through :func:`philox4x64`, a
vectorized re-implementation that is tested bit-for-bit against numpy.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

_U64 = (1 << 64) - 1
_DOMAIN = b"quadsparse/rng/v1"

_MUL0 = np.uint64(0xD2E7470EE14C6C93)
_MUL1 = np.uint64(0xCA5A826395121157)
_BUMP0 = 0x9E3779B97F4A7C15
_BUMP1 = 0xBB67AE8584CAA73B
_LO32 = np.uint64(0xFFFFFFFF)
_SH32 = np.uint64(32)
_SH12 = np.uint64(12)


@dataclass(frozen=True)
class RngSeed:
    """A (master_seed, stream_id) pair naming one independent random stream."""

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or not 0 <= int(value) <= _U64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {value!r}")

    @property
    def key(self) -> int:
        digest = hashlib.sha256(
            _DOMAIN + struct.pack("<QQ", int(self.master_seed), int(self.stream_id))
        ).digest()
        return int.from_bytes(digest[:16], "little")

    def child(self, stream_id: int) -> "RngSeed":
        return RngSeed(self.master_seed, stream_id)

    def to_dict(self) -> dict:
        return {"master_seed": int(self.master_seed), "stream_id": int(self.stream_id)}


def as_seed(seed) -> RngSeed:
    """Coerce an int, a pair or an RngSeed into an RngSeed."""
    if isinstance(seed, RngSeed):
        return seed
    if isinstance(seed, (int, np.integer)):
        return RngSeed(int(seed), 0)
    if isinstance(seed, dict):
        return RngSeed(int(seed["master_seed"]), int(seed.get("stream_id", 0)))
    master, stream = seed
    return RngSeed(int(master), int(stream))


def derive_master(master_seed: int, *path: int) -> int:
    """Hash a master seed and an index path into a new 64-bit master seed."""
    payload = struct.pack(f"<Q{len(path)}Q", int(master_seed), *(int(p) for p in path))
    digest = hashlib.sha256(_DOMAIN + b"/derive" + payload).digest()
    return int.from_bytes(digest[:8], "little")


def _mulhilo(a, b):
    lo = a * b
    al, ah = a & _LO32, a >> _SH32
    bl, bh = b & _LO32, b >> _SH32
    ll, lh, hl, hh = al * bl, al * bh, ah * bl, ah * bh
    mid = (ll >> _SH32) + (lh & _LO32) + (hl & _LO32)
    hi = hh + (lh >> _SH32) + (hl >> _SH32) + (mid >> _SH32)
    return hi, lo


def philox4x64(c0, c1, c2, c3, key: int):
    """Philox4x64-10 on arrays of counters; returns the four output words."""
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in (c0, c1, c2, c3))
    k0, k1 = key & _U64, (key >> 64) & _U64
    with np.errstate(over="ignore"):
        for r in range(10):
            ka = np.uint64((k0 + r * _BUMP0) & _U64)
            kb = np.uint64((k1 + r * _BUMP1) & _U64)
            h0, l0 = _mulhilo(_MUL0, c0)
            h1, l1 = _mulhilo(_MUL1, c2)
            c0, c1, c2, c3 = h1 ^ c1 ^ ka, l1, h0 ^ c3 ^ kb, l0
    return c0, c1, c2, c3


def words_to_normal(words: np.ndarray) -> np.ndarray:
    return ndtri(words_to_uniform(words))


def words_to_uniform(words: np.ndarray) -> np.ndarray:
    # 52 bits: with 53, the top word would round up to exactly 1.0
    return ((np.asarray(words, dtype=np.uint64) >> _SH12).astype(np.float64) + 0.5) * 2.0**-52


def raw_words(key: int, lane: int, count: int, start: int = 0) -> np.ndarray:
    """Words ``start .. start+count-1`` of the stream ``lane`` under ``key``.

    Counter block ``b`` of lane ``lane`` is ``(b + 1, lane, 0, 0)``; word ``w``
    of the stream is word ``w % 4`` of block ``w // 4``.
    """
    first_block, skip = divmod(int(start), 4)
    bg = np.random.Philox(key=key, counter=(int(lane) << 64) | first_block)
    words = bg.random_raw(skip + int(count))
    return words[skip:]


def scattered_words(key: int, lanes, positions) -> np.ndarray:
    """Random-access version of :func:`raw_words` over broadcast index arrays."""
    lanes, positions = np.broadcast_arrays(
        np.asarray(lanes, dtype=np.uint64), np.asarray(positions, dtype=np.uint64)
    )
    block = positions // np.uint64(4) + np.uint64(1)
    word = (positions % np.uint64(4)).astype(np.intp)
    zero = np.zeros_like(block)
    out = np.stack(philox4x64(block, lanes, zero, zero, key), axis=-1)
    return np.take_along_axis(out, word[..., None], axis=-1)[..., 0]


class Stream:
    """Sequential draws from one seed (lane 0), used for signals and noise."""

    def __init__(self, seed):
        self.seed = as_seed(seed)
        self._key = self.seed.key
        self._pos = 0

    def _take(self, count: int) -> np.ndarray:
        words = raw_words(self._key, 0, count, self._pos)
        self._pos += count
        return words

    def uniform(self, size: int) -> np.ndarray:
        return words_to_uniform(self._take(size))

    def normal(self, size: int) -> np.ndarray:
        return words_to_normal(self._take(size))

    def laplace(self, size: int, scale: float = 1.0) -> np.ndarray:
        u = self.uniform(size) - 0.5
        return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))
