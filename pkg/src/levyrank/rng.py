"""Counter-based random streams keyed by (seed, replication, substream)."""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class Substream(IntEnum):
    GAUSSIAN = 0
    EPOCHS = 1
    DISPLACEMENTS = 2
    SPLIT = 3  # fresh increments for the piece after a jump inside a step
    MONTE_CARLO = 4


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {self.seed}")
        if self.stream < 0:
            raise ValueError(f"stream index must be >= 0, got {self.stream}")

    def generator(self, substream: Substream | int) -> np.random.Generator:
        """A fresh generator; the same triple always yields the same draws."""
        seq = np.random.SeedSequence([self.seed, self.stream, int(substream)])
        return np.random.Generator(np.random.Philox(seq))
