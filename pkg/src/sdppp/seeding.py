"""Deterministic random streams.

Every random draw in the package comes from a Philox generator whose key is
derived from ``(master_seed, experiment, cell, replica)``:

    words = blake2b(f"{experiment}|{cell}|{replica}", digest_size=16)
    SeedSequence(entropy=master_seed, spawn_key=4 little-endian uint32 words)

Philox is counter based, so streams with distinct keys are independent and
adding a grid cell never changes the stream of an existing one.
"""
from __future__ import annotations

import hashlib

import numpy as np

# Monte-Carlo loops are cut into replica blocks of this many samples, each
# with its own stream, so results do not depend on how blocks are scheduled.
BLOCK_SIZE = 4096


def spawn_key(experiment: str, cell: int = 0, replica: int = 0) -> tuple[int, ...]:
    digest = hashlib.blake2b(f"{experiment}|{cell}|{replica}".encode(), digest_size=16).digest()
    return tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))


def task_rng(master_seed: int, experiment: str = "", cell: int = 0, replica: int = 0) -> np.random.Generator:
    """Generator for one (experiment, cell, replica) task."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=spawn_key(experiment, cell, replica))
    return np.random.Generator(np.random.Philox(ss))


def blocks(n_samples: int, block_size: int = BLOCK_SIZE):
    """Yield (replica_index, size) pairs covering ``n_samples``."""
    n_full, rest = divmod(int(n_samples), block_size)
    for i in range(n_full):
        yield i, block_size
    if rest:
        yield n_full, rest
