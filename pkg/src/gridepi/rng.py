"""Deterministic random-stream derivation.

Every stochastic component draws from its own ``random.Random`` instance
derived from an integer seed plus a string label. CPython seeds string
values through SHA-512, so the streams are stable across platforms and
interpreter runs, and adding draws to one labeled stream never shifts
another.
"""

from __future__ import annotations

import hashlib
import random


def substream(seed: int, label: str) -> random.Random:
    """Return an independent generator for (seed, label)."""
    return random.Random(f"{seed}:{label}")


def stable_seed(*parts: object) -> int:
    """Derive a 64-bit integer seed from a sequence of identifying parts."""
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")
