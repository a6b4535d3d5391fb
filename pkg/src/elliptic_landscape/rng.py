"""Deterministic, hierarchical random-number streams.

Every stochastic routine in this package draws from an ``RngStream`` (or a
numpy ``Generator`` materialized from one).  A stream is identified by a
64-bit master seed plus a tuple of child indices; the identity alone fixes
the entire byte stream, so per-path / per-anchor substreams can be consumed
in any order (or in parallel) without changing results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RngStream:
    """A pure (seed, key) -> byte-stream identity.

    Distinct keys under the same seed yield statistically independent
    streams (numpy ``SeedSequence`` spawn-key guarantees).
    """

    seed: int
    key: tuple[int, ...] = field(default_factory=tuple)

    def child(self, *indices: int) -> "RngStream":
        """Derive the substream at the given index path."""
        return RngStream(self.seed, self.key + tuple(int(i) for i in indices))

    def generator(self) -> np.random.Generator:
        """Materialize the stream as a fresh numpy Generator."""
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng: "RngStream | np.random.Generator") -> np.random.Generator:
    """Accept either a stream identity or an already-materialized generator."""
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng
