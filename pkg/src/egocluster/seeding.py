"""Keyed hashing used for order-independent randomization."""

from __future__ import annotations

import hashlib

_SCALE = float(2**64)


def hash_u64(seed: int, *keys) -> int:
    h = hashlib.blake2b(digest_size=8, person=b"egocluster")
    h.update(str(int(seed)).encode())
    for k in keys:
        h.update(b"\x1f")
        h.update(str(k).encode())
    return int.from_bytes(h.digest(), "big")


def hash_unit(seed: int, *keys) -> float:
    """Uniform draw in [0, 1) determined by ``(seed, *keys)``."""
    return hash_u64(seed, *keys) / _SCALE


def bernoulli(seed: int, p: float, *keys) -> bool:
    return hash_unit(seed, *keys) < p


def derive_seed(seed: int, *keys) -> int:
    """Child seed for a sub-stream, e.g. one replication of a study."""
    return hash_u64(seed, "derive", *keys) >> 1
