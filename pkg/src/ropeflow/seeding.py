"""Deterministic fan-out of one top-level seed into named streams.

Every consumer of randomness derives its generator from the run seed plus
a label path, so adding a new consumer never shifts the draws of an
existing one, and two runs that differ only in architecture see identical
data, init, and subsampling randomness.
"""

from __future__ import annotations

import hashlib


def sub_seed(base: int, *labels) -> list:
    """Entropy list for numpy default_rng: base seed + hashed labels."""
    parts = [int(base) & 0xFFFFFFFFFFFFFFFF]
    for label in labels:
        digest = hashlib.sha256(str(label).encode("utf-8")).digest()
        parts.append(int.from_bytes(digest[:8], "little"))
    return parts


def seed_int(base: int, *labels) -> int:
    """Single 63-bit integer seed from the same label fan-out."""
    payload = "/".join([str(int(base))] + [str(label) for label in labels])
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1
