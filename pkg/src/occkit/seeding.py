"""Deterministic seed derivation for independent experiment cells."""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derive_seed", "rng_for"]


def derive_seed(*parts: object) -> int:
    """Stable 64-bit seed from a tuple of labels (ints, strings, ...).

    Uses sha256 rather than hash() so results do not depend on
    PYTHONHASHSEED or the platform.
    """
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(*parts: object) -> np.random.Generator:
    """Generator seeded from derive_seed(*parts)."""
    return np.random.default_rng(derive_seed(*parts))
