"""Seeded random streams with labeled, independent substreams.

Every stochastic step in the package draws from a Prng seeded by a 64-bit
integer. Substreams are derived from (seed, label) with a cryptographic
hash, so adding a new consumer under a fresh label never perturbs the
streams of existing consumers.
"""
from __future__ import annotations

import hashlib

import numpy as np

_MAX_SEED = 2**64 - 1


def derive_seed(seed: int, label: str) -> int:
    """Stable 64-bit child seed for (seed, label)."""
    digest = hashlib.blake2b(f"{seed}/{label}".encode("utf-8"), digest_size=8)
    return int.from_bytes(digest.digest(), "big")


class Prng:
    """Deterministic random stream (PCG64) splittable by labeled keys."""

    ALGORITHM = "PCG64"

    def __init__(self, seed: int):
        if not 0 <= int(seed) <= _MAX_SEED:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def substream(self, label: str) -> "Prng":
        """Independent stream keyed by label; stable across runs."""
        return Prng(derive_seed(self.seed, label))

    def derive_seed(self, label: str) -> int:
        return derive_seed(self.seed, label)

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def normal(self, loc, scale: float, size) -> np.ndarray:
        return self._gen.normal(loc, scale, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, low: int, high: int, size) -> np.ndarray:
        return self._gen.integers(low, high, size=size)
