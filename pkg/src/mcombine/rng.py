"""Splittable random-number streams with reproducible substream derivation.

Every stochastic routine in the package receives an :class:`RngStream`
rather than a bare seed.  A stream is identified by a 64-bit master seed
plus a derivation path (a tuple of non-negative integers); distinct paths
yield statistically independent, collision-free streams regardless of the
order in which they are created or consumed.  That property is what makes
experiment results independent of trial execution order and worker count.

Derivation is delegated to numpy's ``SeedSequence`` (the path becomes the
spawn key) feeding a counter-based Philox generator, so a stream is fully
determined by ``(master_seed, path)`` and nothing else.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DomainError

_MAX_SEED = 2**64


class RngStream:
    """A single-owner random stream addressed by ``(master_seed, path)``.

    Draws from a stream are sequential and stateful; derive fresh
    substreams with :meth:`substream` instead of sharing one stream
    between independent consumers.
    """

    __slots__ = ("master_seed", "path", "_gen")

    def __init__(self, master_seed: int, path: tuple[int, ...] = ()):
        if not (0 <= int(master_seed) < _MAX_SEED):
            raise DomainError(f"master_seed must be a 64-bit unsigned integer, got {master_seed!r}")
        for p in path:
            if not (0 <= int(p) < _MAX_SEED):
                raise DomainError(f"path entries must be 64-bit unsigned integers, got {p!r}")
        self.master_seed = int(master_seed)
        self.path = tuple(int(p) for p in path)
        self._gen: np.random.Generator | None = None

    @property
    def gen(self) -> np.random.Generator:
        """The underlying numpy generator (created lazily, then stateful)."""
        if self._gen is None:
            seq = np.random.SeedSequence(self.master_seed, spawn_key=self.path)
            self._gen = np.random.Generator(np.random.Philox(seq))
        return self._gen

    def substream(self, *indices: int) -> "RngStream":
        """Return a fresh independent stream with ``indices`` appended to the path."""
        return RngStream(self.master_seed, self.path + tuple(int(i) for i in indices))

    def standard_normal(self, shape) -> np.ndarray:
        return self.gen.standard_normal(shape)

    def random(self, shape) -> np.ndarray:
        return self.gen.random(shape)

    def __repr__(self) -> str:
        return f"RngStream(master_seed={self.master_seed}, path={self.path})"
