"""Deterministic seed derivation for reproducible multi-stage runs.

Child seeds are derived by hashing the master seed together with a stage
name and an item index, so parallel workers can partition seed space
without coordination and reruns reproduce every stream bit-for-bit.
"""

from __future__ import annotations

import hashlib

import numpy as np

_TAG = b"riverflow-seed-v1"


def derive_seed(master_seed: int, *tokens: object) -> int:
    """Derive a child seed from a master seed and a token path.

    Tokens may be strings or integers (stage names, item indices).
    The result is a uint64 suitable for numpy PCG64 seeding.
    """
    h = hashlib.sha256(_TAG)
    h.update(str(int(master_seed)).encode())
    for tok in tokens:
        h.update(b"\x1f")
        h.update(str(tok).encode())
    return int.from_bytes(h.digest()[:8], "little")


def make_rng(seed: int, *tokens: object) -> np.random.Generator:
    """Seeded generator; with tokens, seeds from the derived child seed."""
    if tokens:
        seed = derive_seed(seed, *tokens)
    return np.random.Generator(np.random.PCG64(seed))
