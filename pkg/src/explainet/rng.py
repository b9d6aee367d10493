"""Deterministic random number plumbing.

Every source of randomness in a run is derived from a single 64-bit fold
seed.  Named substreams ("init", "shuffle", "augment", ...) get their own
seeds through a SplitMix64 mix of the fold seed and a stream tag, so
adding a new consumer never perturbs the draws of existing ones.
"""

from __future__ import annotations

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def derive_seed(fold_seed: int, stream: str) -> int:
    """64-bit seed for a named substream of the given fold seed."""
    state = fold_seed & _MASK64
    for byte in stream.encode("utf-8"):
        state, _ = _splitmix64(state ^ byte)
    _, out = _splitmix64(state)
    return out


def substream(fold_seed: int, stream: str) -> np.random.Generator:
    """A numpy Generator owned by one consumer; seeded from the fold seed."""
    return np.random.default_rng(derive_seed(fold_seed, stream))
