"""Hierarchical seed derivation.

Every random stream is a :class:`numpy.random.SeedSequence` keyed by the
master seed and a path of integers::

    (scenario, distance index, rotation index, trial index, role)

so any single coordinate can change without disturbing the others.
"""

from __future__ import annotations

import zlib

import numpy as np

# roles
PATHS = 0
CODEBOOKS = 1
NOISE = 2
ROTATION = 3


def scenario_key(name: str) -> int:
    """Stable 32-bit key for a scenario name."""
    return zlib.crc32(name.encode("utf-8"))


def derive(master_seed: int, *keys: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in keys))


def rng(master_seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(derive(master_seed, *keys))
