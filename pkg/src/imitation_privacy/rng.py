"""Deterministic, splittable random streams.

Every stochastic component draws from a counter-based Philox generator keyed
by (experiment seed, role, trial index).  Streams with the same key are
bit-identical regardless of execution order, which is what makes parallel and
serial runs interchangeable.
"""

import hashlib

import numpy as np


def _token(part) -> int:
    """Map a key component to a stable unsigned 32-bit integer."""
    if isinstance(part, (bool, np.bool_)):
        return int(part)
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    digest = hashlib.sha256(str(part).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def child_rng(seed: int, *path) -> np.random.Generator:
    """Generator for the stream keyed by ``(seed, *path)``.

    ``path`` components may be ints or strings (role names, trial indices).
    The same key always yields the same stream; distinct keys yield
    statistically independent streams.
    """
    entropy = (int(seed) & 0xFFFFFFFFFFFFFFFF,) + tuple(_token(p) for p in path)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def child_seed(seed: int, *path) -> int:
    """A plain integer seed derived from the same keying scheme."""
    return int(child_rng(seed, *path).integers(0, 2**63 - 1))
