"""Seeded randomness.

Every stochastic consumer draws from its own named substream of a
counter-based generator (Philox 4x64). A substream key is the BLAKE2b hash of
the master seed and a tuple of names, so adding a consumer never shifts the
draws of another one.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1
_TWO53 = float(1 << 53)


def derive_seed(seed: int, *names: str | int) -> int:
    """Hash ``(seed, *names)`` to a new unsigned 64-bit seed."""
    h = hashlib.blake2b(digest_size=8)
    h.update(int(seed & _MASK64).to_bytes(8, "little"))
    for name in names:
        h.update(b"\x00")
        h.update(str(name).encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


def substream(seed: int, *names: str | int) -> np.random.Generator:
    key = derive_seed(seed, *names)
    return np.random.Generator(np.random.Philox(key=key))


def as_generator(random_state, *names: str | int) -> np.random.Generator:
    """Accept an int seed, ``None`` (seed 0) or an existing Generator."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    if random_state is None:
        random_state = 0
    return substream(int(random_state), *names)


def uniform_open(gen: np.random.Generator, shape=()) -> np.ndarray:
    """Uniform draws strictly inside (0, 1) on a 2**-53 lattice."""
    k = gen.integers(0, 1 << 53, size=shape, dtype=np.int64)
    return (k.astype(np.float64) + 0.5) / _TWO53


def standard_normal(gen: np.random.Generator, shape=()) -> np.ndarray:
    """Standard Gaussian draws via the Box-Muller transform."""
    shape = (shape,) if isinstance(shape, int) else tuple(shape)
    n = int(np.prod(shape, dtype=np.int64))
    pairs = (n + 1) // 2
    u1 = uniform_open(gen, pairs)
    u2 = uniform_open(gen, pairs)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
    return z.reshape(shape)
