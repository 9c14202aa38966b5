"""Deterministic random streams.

Every consumer of randomness gets its own named child stream so that adding
or reordering one consumer never shifts the draws seen by another. Child
streams derive from the root seed and the path of names alone.
"""

from __future__ import annotations

import zlib

import numpy as np


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


class Rng:
    """A PCG64 stream addressed by (seed, path of names)."""

    def __init__(self, seed: int, _path: tuple[int, ...] = ()) -> None:
        self.seed = int(seed)
        self._path = _path
        self._ss = np.random.SeedSequence(self.seed, spawn_key=self._path)
        self.generator = np.random.Generator(np.random.PCG64(self._ss))

    def child(self, name: str) -> "Rng":
        """An independent stream; same (seed, path) always gives same draws."""
        return Rng(self.seed, self._path + (_name_key(name),))

    def fork(self, index: int) -> "Rng":
        """Numbered child, for per-epoch or per-example streams."""
        return Rng(self.seed, self._path + (int(index),))
