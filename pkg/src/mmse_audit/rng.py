"""Seeded random streams.

Every random draw in the package goes through a Philox generator (a 64-bit
keyed counter-based PRNG) and normals come from the Box-Muller transform of
its uniform output, so results depend only on the seed and not on numpy's
internal normal sampler.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One round of the splitmix64 finalizer on a 64-bit integer."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(master: int, *keys: int) -> int:
    """Hash a master seed and a path of integer keys into a child seed.

    Children of the same parent never collide for distinct key paths in
    practice, and adding new keys never changes existing children.
    """
    h = splitmix64(int(master) & _MASK64)
    for k in keys:
        h = splitmix64(h ^ (int(k) & _MASK64))
    return h


def generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & _MASK64))


def uniform(gen: np.random.Generator, size) -> np.ndarray:
    """Uniforms on [0, 1)."""
    return gen.random(size)


def standard_normal(gen: np.random.Generator, size) -> np.ndarray:
    """Standard normal variates via Box-Muller on the generator's uniforms."""
    shape = (size,) if np.isscalar(size) else tuple(size)
    n = int(np.prod(shape, dtype=np.int64))
    if n == 0:
        return np.zeros(shape)
    half = (n + 1) // 2
    u = gen.random((2, half))
    radius = np.sqrt(-2.0 * np.log1p(-u[0]))  # 1 - u in (0, 1]
    angle = 2.0 * np.pi * u[1]
    z = np.empty(2 * half)
    z[0::2] = radius * np.cos(angle)
    z[1::2] = radius * np.sin(angle)
    return z[:n].reshape(shape)


def bernoulli(gen: np.random.Generator, p: float, n: int) -> np.ndarray:
    return (gen.random(n) < p).astype(np.float64)
