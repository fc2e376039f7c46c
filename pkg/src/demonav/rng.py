"""Named, seedable RNG streams on top of numpy's counter-based Philox generator.

Every stochastic component (maze carving, obstacle spawning, episode resets,
training noise, ...) draws from its own stream derived from a root seed and a
stream name, so any single component can be reproduced in isolation.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream", "stream_seed"]


def _name_digest(name: str) -> int:
    # stable across processes and python versions, unlike hash()
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")


def stream_seed(root_seed: int, name: str, *indices: int) -> np.random.SeedSequence:
    """Seed sequence for the stream ``name`` (plus optional sub-indices)."""
    entropy = [int(root_seed) & 0xFFFFFFFFFFFFFFFF, _name_digest(name)]
    entropy.extend(int(i) & 0xFFFFFFFFFFFFFFFF for i in indices)
    return np.random.SeedSequence(entropy)


def stream(root_seed: int, name: str, *indices: int) -> np.random.Generator:
    """Independent Philox generator for the named stream.

    Same (root_seed, name, indices) always yields the same generator state;
    distinct names yield statistically independent streams.
    """
    return np.random.Generator(np.random.Philox(stream_seed(root_seed, name, *indices)))
