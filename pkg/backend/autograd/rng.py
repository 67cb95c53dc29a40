"""Named, seeded random streams.

All randomness goes through numpy's PCG64 bit generator seeded from a
``SeedSequence``. PCG64 output is specified independently of platform, so the
same seed yields the same stream everywhere.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Rng:
    seed: int
    algorithm: str = "PCG64"

    def generator(self, stream: str = "") -> np.random.Generator:
        """Independent generator for a named purpose (``"init"``, ``"shuffle"``...)."""
        entropy = [self.seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(stream.encode("utf-8"))]
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

    def derive(self, offset: int) -> "Rng":
        """Seed for an independent job, e.g. ``seed + fold_index``."""
        return Rng(self.seed + int(offset), self.algorithm)
