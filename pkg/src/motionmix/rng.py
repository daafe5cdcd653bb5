"""Deterministic random-stream derivation.

Every stochastic component takes a root seed plus an integer key path and
derives an independent generator from it.  Two calls with the same
(seed, keys) always yield identical streams, and distinct key paths never
collide, so corpus generation, corruption, training and sampling can each
consume randomness without any shared mutable state.
"""
from __future__ import annotations

import numpy as np

# Key-path prefixes.  One per consumer so streams stay disjoint even when
# the trailing indices overlap.
K_CORPUS = 0
K_CORRUPT = 1
K_SHUFFLE = 2
K_TRAIN = 3
K_SAMPLE = 4
K_INIT = 5
K_EXTRACTOR = 6
K_EVAL = 7
K_ABLATE = 8


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Return a generator for the stream identified by (seed, *keys)."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *keys: int) -> int:
    """Collapse (seed, *keys) to a single integer seed for sub-components."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
