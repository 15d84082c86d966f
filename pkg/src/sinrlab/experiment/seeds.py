"""Domain-separated child seeds: a 64-bit hash of (base seed, purpose, indices)."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(base: int, purpose: str, *index: int) -> int:
    msg = ":".join([str(int(base)), purpose, *(str(int(i)) for i in index)]).encode()
    return int.from_bytes(hashlib.blake2b(msg, digest_size=8).digest(), "little")


def child_rng(base: int, purpose: str, *index: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(base, purpose, *index))
