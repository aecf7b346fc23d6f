"""Deterministic named random streams.

Every random draw in the package comes from a stream identified by a root
seed plus a tuple of names (chain id, step index, role, ...).  Names are
hashed into 32-bit words and fed to numpy's SeedSequence together with the
root seed, so the same (seed, names) pair yields bit-identical draws on any
platform, independent of call order or thread scheduling.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _name_words(name: object) -> list[int]:
    if isinstance(name, (int, np.integer)):
        v = int(name)
        # split arbitrary ints into nonnegative 32-bit words
        return [v & 0xFFFFFFFF, (v >> 32) & 0xFFFFFFFF]
    data = str(name).encode("utf-8")
    digest = hashlib.blake2s(data, digest_size=8).digest()
    return [int.from_bytes(digest[:4], "little"), int.from_bytes(digest[4:], "little")]


def stream(seed: int, *names: object) -> np.random.Generator:
    """Generator for the stream identified by ``(seed, *names)``."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for name in names:
        entropy.extend(_name_words(name))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def digest_array(arr: np.ndarray) -> str:
    """Stable short hex digest of an array's contents (used as a chain id)."""
    h = hashlib.blake2s(digest_size=8)
    h.update(str(arr.dtype).encode())
    h.update(str(arr.shape).encode())
    h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def digest_bytes(data: bytes) -> str:
    """Stable short hex digest of raw bytes (used for file identities)."""
    return hashlib.blake2s(data, digest_size=8).hexdigest()
