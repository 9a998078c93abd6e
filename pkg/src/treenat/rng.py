"""Deterministic RNG sub-stream derivation.

All randomness in the toolkit flows from one top-level integer seed.
Sub-streams are derived by hashing the seed together with string/int tags,
so parallel stages never share or race a global RNG state.
"""

import hashlib

import numpy as np


def derive_seed(seed: int, *tags) -> int:
    """Map (seed, tags...) to a stable 128-bit integer sub-seed."""
    material = ":".join([str(int(seed))] + [str(t) for t in tags])
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return int.from_bytes(digest[:16], "little")


def derive_rng(seed: int, *tags) -> np.random.Generator:
    """A fresh Generator for the (seed, tags...) sub-stream."""
    return np.random.default_rng(derive_seed(seed, *tags))
