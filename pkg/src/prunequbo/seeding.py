"""Labeled random-stream derivation.

Every source of randomness in the toolkit derives its seed from a master
seed plus a component label (and optional index), so sub-streams stay
stable when unrelated parts of a configuration change.
"""

import hashlib

import numpy as np

_MASK63 = (1 << 63) - 1


def normalize_seed(seed: int) -> int:
    """Map an arbitrary integer seed onto the nonnegative range numpy accepts."""
    return int(seed) % (1 << 63)


def derive_seed(master: int, label: str, index: int = 0) -> int:
    """Stable 63-bit sub-seed for (master, label, index).

    Uses SHA-256 so the mapping is identical across platforms and runs.
    """
    digest = hashlib.sha256(f"{master}:{label}:{index}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & _MASK63


def stream(master: int, label: str, index: int = 0) -> np.random.Generator:
    """Generator for the labeled sub-stream."""
    return np.random.default_rng(derive_seed(master, label, index))
