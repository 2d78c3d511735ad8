"""Deterministic sub-seed derivation.

Every random stream in the toolkit hangs off a single master seed; child
seeds are derived by hashing (seed, scope...) with SHA-256 so that adding a
new randomized stage never perturbs the streams of existing ones, and so
that results are reproducible across platforms and process boundaries
(unlike the builtin ``hash``).
"""

import hashlib

import numpy as np


def derive_seed(seed: int, *scope) -> int:
    """Derive a 64-bit child seed from a master seed and scope labels."""
    material = repr((int(seed),) + tuple(str(part) for part in scope))
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def rng(seed: int, *scope) -> np.random.Generator:
    """A PCG64 generator seeded from ``derive_seed(seed, *scope)``."""
    return np.random.default_rng(derive_seed(seed, *scope))
