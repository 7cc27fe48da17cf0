"""Labeled RNG streams derived from a single master seed."""
from __future__ import annotations

import zlib

import numpy as np


def _label_key(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


def seed_sequence(master_seed: int, *labels) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(_label_key(x) for x in labels))


def derive_rng(master_seed: int, *labels) -> np.random.Generator:
    """Generator for the stream named by ``labels`` (purpose strings and/or indices).

    The same (seed, labels) always yields the same stream, independent of how
    many other streams were created.
    """
    return np.random.default_rng(seed_sequence(master_seed, *labels))


def derive_seed(master_seed: int, *labels) -> int:
    return int(seed_sequence(master_seed, *labels).generate_state(1, dtype=np.uint32)[0])
