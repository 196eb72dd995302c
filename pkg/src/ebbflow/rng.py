"""Keyed pseudo-random draws.

Each draw is a pure function of ``(seed, purpose, *key)``, so adding a new
kind of draw never perturbs existing ones.
"""

from __future__ import annotations

import hashlib
import struct

_SCALE = float(1 << 64)


def keyed_u64(seed: int, purpose: str, *key: int) -> int:
    h = hashlib.blake2b(digest_size=8, person=purpose.encode()[:16].ljust(16, b"\0"))
    h.update(struct.pack(f"<q{len(key)}q", seed, *key))
    return int.from_bytes(h.digest(), "little")


def keyed_uniform(seed: int, purpose: str, *key: int) -> float:
    """Uniform draw in [0, 1)."""
    return keyed_u64(seed, purpose, *key) / _SCALE


def keyed_randint(seed: int, purpose: str, lo: int, hi: int, *key: int) -> int:
    """Uniform integer in the closed range [lo, hi]."""
    return lo + keyed_u64(seed, purpose, *key) % (hi - lo + 1)
