"""Labeled seed derivation so every component draws from one root seed."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root: int, label: str, index: int = 0) -> int:
    """Derive a child seed from (root, label, index).

    Stable across platforms and Python versions (blake2b, not hash()).
    """
    msg = f"{root}:{label}:{index}".encode()
    digest = hashlib.blake2b(msg, digest_size=8).digest()
    return int.from_bytes(digest, "little")


def rng_for(root: int, label: str, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, label, index))
