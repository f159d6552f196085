"""Counter-based SplitMix64 random stream.

Draw ``k`` of the stream seeded with ``s`` is ``mix(s + (k + 1) * GOLDEN)``,
so any draw can be computed in isolation and a stream of length ``n`` is a
prefix of the stream of length ``m > n``.  Constants (Steele, Lea & Flood):

    GOLDEN = 0x9E3779B97F4A7C15
    mix(z): z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
            z = (z ^ (z >> 27)) * 0x94D049BB133111EB
            z =  z ^ (z >> 31)

Uniforms use the top 53 bits: ``(z >> 11) * 2**-53`` in [0, 1).
Indices in ``[0, n)`` are ``floor(uniform * n)``.
Normals use Box-Muller on draws ``2j`` and ``2j + 1``, keeping the cosine branch.
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def raw(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Draws ``start .. start+count-1`` as uint64."""
    counters = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & _MASK) + counters * GOLDEN
        return _mix(z)


def uniform(seed: int, count: int, start: int = 0) -> np.ndarray:
    return (raw(seed, count, start) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def indices(seed: int, n: int, count: int, start: int = 0) -> np.ndarray:
    """Uniform sample with replacement from ``range(n)``."""
    idx = np.floor(uniform(seed, count, start) * n).astype(np.intp)
    return np.minimum(idx, n - 1)


def normal(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Standard normals; normal ``j`` consumes uniforms ``2(start+j)`` and ``2(start+j)+1``."""
    u = uniform(seed, 2 * count, 2 * start)
    u1 = 1.0 - u[0::2]  # (0, 1], keeps the log finite
    u2 = u[1::2]
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def derive_seed(master: int, *keys: int) -> int:
    """Child seed for ``(master, key1, key2, ...)``; used for per-repetition streams."""
    s = master & _MASK
    for k in keys:
        with np.errstate(over="ignore"):
            z = np.uint64(s) + np.uint64((k + 1) & _MASK) * GOLDEN
            s = int(_mix(np.array([z], dtype=np.uint64))[0])
    return s
