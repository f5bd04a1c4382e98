"""Deterministic seed derivation for per-clip / per-worker generators.

Python's builtin ``hash`` is salted per process, so seeds are derived from
sha256 instead; the same (global_seed, parts) always yields the same stream
no matter which worker or run touches the clip.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(global_seed: int, *parts: str | int) -> int:
    digest = hashlib.sha256()
    digest.update(str(int(global_seed)).encode())
    for part in parts:
        digest.update(b"\x1f")
        digest.update(str(part).encode())
    return int.from_bytes(digest.digest()[:8], "big")


def rng_for(global_seed: int, *parts: str | int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(global_seed, *parts))
