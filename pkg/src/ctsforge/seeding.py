"""Deterministic RNG derivation.

Every stochastic component draws from a generator derived from the run seed
plus a string/int key path, so independent jobs stay reproducible regardless
of scheduling order.
"""

import hashlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFF
    digest = hashlib.sha256(str(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def spawn_rng(seed: int, *keys) -> np.random.Generator:
    """Generator seeded by (seed, *keys); same arguments, same stream."""
    entropy = [int(seed) & 0xFFFFFFFF] + [_key_to_int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed: int, *keys) -> int:
    """Collapse (seed, *keys) into a single 32-bit seed."""
    return int(spawn_rng(seed, *keys).integers(0, 2**31 - 1))
