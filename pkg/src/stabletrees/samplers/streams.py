"""Seeded, replicate-addressable random number streams.

Every replicate of an experiment owns the stream (seed, stream_id).
Streams with the same pair reproduce bit-identical draws; distinct
stream_ids give statistically independent generators regardless of how
replicates are scheduled across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        return make_rng(self.seed, self.stream_id)

    def child(self, offset: int) -> "RngStream":
        """Derived stream for a sub-task; offsets partition the id space."""
        return RngStream(self.seed, self.stream_id * 1000 + offset)


def make_rng(seed: int, stream_id: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(stream_id,))
    return np.random.Generator(np.random.PCG64(ss))


def replicate_map(n_replicates: int, workers: int) -> list[list[int]]:
    """Partition replicate ids over workers, round robin.

    The partition only decides scheduling.  Replicate k always runs on
    stream k, so results do not depend on the worker count.
    """
    if n_replicates < 0:
        raise ValueError("n_replicates must be non-negative")
    if workers < 1:
        raise ValueError("workers must be positive")
    return [list(range(w, n_replicates, workers)) for w in range(workers)]
