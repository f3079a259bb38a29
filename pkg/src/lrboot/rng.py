"""Deterministic RNG substreams.

Every stochastic routine in the package derives its generator from a master
seed plus a tuple of integer/string keys, so results are independent of
scheduling and thread count.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["substream", "derive_seed", "stable_int"]


def stable_int(key: str) -> int:
    """Map a string to a stable 64-bit integer (process-independent)."""
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _entropy(keys: tuple) -> list[int]:
    out = []
    for k in keys:
        if isinstance(k, (int, np.integer)):
            out.append(int(k) & 0xFFFFFFFFFFFFFFFF)
        elif isinstance(k, str):
            out.append(stable_int(k))
        else:
            raise TypeError(f"seed keys must be int or str, got {type(k).__name__}")
    return out


def substream(*keys: int | str) -> np.random.Generator:
    """Generator seeded by the key tuple; identical keys give identical streams."""
    return np.random.default_rng(np.random.SeedSequence(_entropy(keys)))


def derive_seed(*keys: int | str) -> int:
    """Collapse a key tuple into a single reproducible 64-bit seed."""
    return int(np.random.SeedSequence(_entropy(keys)).generate_state(1, np.uint64)[0])
