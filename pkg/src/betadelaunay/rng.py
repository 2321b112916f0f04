"""Seed derivation.

Every random stream is addressed by a tuple of non-negative integers
``(master, key_1, key_2, ...)`` fed to :class:`numpy.random.SeedSequence`
as its entropy.  Replicate ``k`` of a campaign with master seed ``s`` uses
``(s, k)``; sub-streams of that replicate (resampling, extension layers)
append further keys.  The stream of a replicate therefore never depends
on scheduling or on how many workers ran the campaign.
"""

from __future__ import annotations

from typing import Sequence, Union

import numpy as np

Seed = Union[int, Sequence[int]]


def seed_key(seed: Seed) -> tuple[int, ...]:
    if isinstance(seed, (int, np.integer)):
        if seed < 0:
            raise ValueError(f"seeds must be non-negative, got {seed}")
        return (int(seed),)
    key = tuple(int(s) for s in seed)
    if not key or any(s < 0 for s in key):
        raise ValueError(f"invalid seed path {seed!r}")
    return key


def derive_seed(seed: Seed, *keys: int) -> tuple[int, ...]:
    """Child seed path of ``seed`` addressed by ``keys``."""
    return seed_key(seed) + tuple(int(k) for k in keys)


def make_rng(seed: Seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(seed_key(seed)))))
