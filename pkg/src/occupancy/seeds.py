"""Seed splitting.

Every random stream in the toolkit comes from ``child_seed(master, *keys)``:
the master seed (reduced mod 2**64, 8 bytes big-endian) and the UTF-8 key parts, joined with 0x1f
separators, are hashed with BLAKE2b (8-byte digest); the digest read as an
unsigned big-endian integer is the child seed. The rule depends only on the
hash, so derived streams are stable across platforms and Python versions.
"""

from __future__ import annotations

import hashlib

import numpy as np


def child_seed(master: int, *keys: object) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update((int(master) & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "big"))
    for k in keys:
        h.update(b"\x1f")
        h.update(str(k).encode("utf-8"))
    return int.from_bytes(h.digest(), "big")


def rng(master: int, *keys: object) -> np.random.Generator:
    return np.random.default_rng(child_seed(master, *keys))
