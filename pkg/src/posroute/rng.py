"""Labeled sub-seeds: every random stream derives from one root seed."""
from __future__ import annotations

import zlib

import numpy as np


def _label_key(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFF
    return zlib.crc32(str(label).encode())


def seed_sequence(root: int, *labels) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(root), spawn_key=tuple(_label_key(x) for x in labels))


def rng_for(root: int, *labels) -> np.random.Generator:
    """Independent generator for the stream named by ``labels`` under ``root``.

    >>> a = rng_for(1, "gossip", 3).integers(1 << 30)
    >>> a == rng_for(1, "gossip", 3).integers(1 << 30)
    True
    """
    return np.random.default_rng(seed_sequence(root, *labels))


def derive_seed(root: int, *labels) -> int:
    return int(seed_sequence(root, *labels).generate_state(1, np.uint64)[0])
