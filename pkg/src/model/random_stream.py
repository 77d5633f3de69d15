"""Splittable counter-based random streams.

A stream is an immutable (seed, path) pair. Children are derived by appending
integer keys to the path, so the draws of a task depend only on the global seed
and the task's key, never on scheduling or worker count.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

# Named sub-streams of a run.
NU_L = 1
EXCURSIONS = 2
DUMP = 3
PSI_DRAWS = 4
RESAMPLE = 5
BOOTSTRAP = 6
STATIONARITY = 7


@dataclass(frozen=True)
class RandomStream:
    """Seed plus spawn path; builds a fresh Philox generator on demand."""

    seed: int
    path: Tuple[int, ...] = ()

    def child(self, *keys: int) -> "RandomStream":
        return RandomStream(self.seed, self.path + tuple(int(k) for k in keys))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(seq))

    @property
    def tag(self) -> str:
        return ":".join(str(k) for k in (self.seed,) + self.path)
