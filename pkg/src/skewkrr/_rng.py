"""Seed derivation so every random stream is a pure function of a master seed.

Stream keys used across the package:

    X draw            (seed, 0)
    noise draw        (seed, 1)
    bandwidth probe   (seed, 2)
    lambda holdout    (seed, 3)
    partition         (seed, 4)
    test grid         (seed, 5)
    stratified split  (seed, 6)
    bench cell/rep    (master, cell, replicate)
"""

import numpy as np

STREAM_X = 0
STREAM_NOISE = 1
STREAM_BANDWIDTH = 2
STREAM_HOLDOUT = 3
STREAM_PARTITION = 4
STREAM_TEST_GRID = 5
STREAM_SPLIT = 6


def derive_seed(master: int, *keys: int) -> int:
    ss = np.random.SeedSequence(int(master) % 2**63, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def rng_for(master: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(master) % 2**63, spawn_key=tuple(int(k) for k in keys)))
