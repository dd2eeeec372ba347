"""Deterministic, splittable random number streams.

Built on numpy's Philox bit generator, which is counter-based: the same
(seed, key path) yields the same draw sequence on every platform and run.
Substreams are derived by key, never by splitting off the parent's state,
so the order in which consumers draw can never perturb each other.
"""
from __future__ import annotations

import zlib

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def _normalize_key_part(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & _MASK64
    if isinstance(part, str):
        # crc32 is stable across platforms and Python processes (unlike hash()).
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"stream key parts must be int or str, got {type(part).__name__}")


class RngStream:
    """A seeded random stream addressable by (seed, key path).

    Instances are single-owner: share work across threads or processes by
    handing each worker its own ``substream(...)``, not by sharing a stream.
    """

    def __init__(self, seed: int, _key: tuple[int, ...] = ()):
        self.seed = int(seed) & _MASK64
        self.key = tuple(_key)
        self._gen = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy=self.seed, spawn_key=self.key))
        )

    def substream(self, *parts) -> "RngStream":
        """Derive an independent stream keyed by ``parts`` (ints or strings)."""
        if not parts:
            raise ValueError("substream requires at least one key part")
        return RngStream(self.seed, self.key + tuple(_normalize_key_part(p) for p in parts))

    def random(self, size=None):
        """Uniform draws on [0, 1)."""
        return self._gen.random(size)

    def uniform(self, low: float, high: float, size=None):
        return self._gen.uniform(low, high, size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None):
        return self._gen.normal(loc, scale, size)

    def integers(self, low: int, high: int, size=None):
        """Integers drawn uniformly from [low, high)."""
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def keep_mask(self, keep_prob: float, size) -> np.ndarray:
        """Bernoulli(keep_prob) draws as a float 0/1 array.

        keep_prob = 1 yields all ones exactly (draws live in [0, 1)).
        """
        return (self._gen.random(size) < keep_prob).astype(np.float64)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, key={self.key})"
