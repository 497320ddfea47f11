"""Seed derivation and counter-based substreams.

Every random draw in the package is keyed by a tuple of labels (master seed,
purpose, index, ...).  Keys are hashed with BLAKE2b into 64-bit seeds, so the
order in which draws are made never changes their values.  Bulk per-channel
draws use the SplitMix64 finalizer over (seed, channel key), vectorised with
numpy.
"""

from __future__ import annotations

import hashlib
from typing import Union

import numpy as np

Label = Union[int, str]

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def derive_seed(*labels: Label) -> int:
    """Hash a tuple of labels into a 64-bit seed."""
    h = hashlib.blake2b(digest_size=8)
    for label in labels:
        if isinstance(label, bool) or not isinstance(label, (int, str)):
            raise TypeError(f"seed labels must be int or str, got {label!r}")
        tag = b"i" if isinstance(label, int) else b"s"
        data = str(label).encode()
        h.update(tag + len(data).to_bytes(4, "little") + data)
    return int.from_bytes(h.digest(), "little")


def stream(*labels: Label) -> np.random.Generator:
    """A PCG64 generator seeded from ``derive_seed(*labels)``."""
    return np.random.Generator(np.random.PCG64(derive_seed(*labels)))


def key64(text: str) -> int:
    return derive_seed(text)


def _splitmix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def hash_uniform(seed: int, keys: np.ndarray) -> np.ndarray:
    """One uniform double in [0, 1) per key, a pure function of (seed, key)."""
    keys = np.asarray(keys, dtype=np.uint64)
    with np.errstate(over="ignore"):
        s = _splitmix(np.array([seed & _MASK64], dtype=np.uint64) + _GOLDEN)[0]
        z = _splitmix(keys * _GOLDEN + s)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
