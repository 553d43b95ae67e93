"""Deterministic seed derivation for independent RNG streams."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from a tuple of parts (ints, strings).

    Used to give every sub-task (per-iteration training, per-example oracle
    draws, acquisition sampling) its own stream so results do not depend on
    call order.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big")


def derive_rng(*parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))
