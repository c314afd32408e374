"""Counter-based random streams indexed by a path of integers.

A stream is a Philox generator keyed by ``SeedSequence(seed, spawn_key=path)``,
so the draws for e.g. replicate 17 of setting 2 depend only on
``(seed, 2, 17)`` and never on how work is split across processes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# top-level domains keep unrelated consumers apart
DOMAIN_STUDY = 1
DOMAIN_BOOTSTRAP = 2
DOMAIN_TRUTH = 3
DOMAIN_POWER = 4
DOMAIN_GENERATE = 5


@dataclass(frozen=True)
class StreamKey:
    seed: int
    path: tuple[int, ...] = ()

    def child(self, *idx: int) -> "StreamKey":
        return StreamKey(self.seed, self.path + tuple(int(i) for i in idx))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=self.path)
        return np.random.Generator(np.random.Philox(ss))


def stream(seed: int, *path: int) -> np.random.Generator:
    return StreamKey(int(seed), tuple(int(p) for p in path)).generator()
