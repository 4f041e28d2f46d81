"""Deterministic RNG derivation.

Every random draw in the package flows from an explicit seed through
`derive_rng`. Sub-streams are keyed by (seed, *tags) so that, e.g., domain 2's
initialization stream does not depend on how many other domains exist.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError(f"seed keys must be non-negative, got {key}")
        return int(key)
    if isinstance(key, str):
        digest = hashlib.sha256(key.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "big")
    raise TypeError(f"unsupported seed key type: {type(key).__name__}")


def seed_sequence(*keys) -> np.random.SeedSequence:
    """Build a SeedSequence from a mix of ints and strings."""
    return np.random.SeedSequence([_key_to_int(k) for k in keys])


def derive_rng(*keys) -> np.random.Generator:
    """A fresh Generator keyed by the given ints/strings."""
    return np.random.default_rng(seed_sequence(*keys))
