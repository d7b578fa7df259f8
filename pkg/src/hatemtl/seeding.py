"""Deterministic seed derivation.

All randomness in a workspace flows from one root seed. Child seeds are
derived from the root plus a context path (run index, fold index, purpose
string): string parts hash through SHA-256 to 64-bit keys, then the whole
key list feeds a numpy SeedSequence. The same path always yields the same
child seed on every platform.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key(part: int | str) -> int:
    if isinstance(part, bool):
        raise TypeError("seed path parts must be ints or strings")
    if isinstance(part, int):
        if part < 0:
            raise ValueError("integer seed parts must be non-negative")
        return part
    digest = hashlib.sha256(part.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_seed(root: int, *path: int | str) -> int:
    """A stable 63-bit child seed for the given context path."""
    seq = np.random.SeedSequence([_key(root), *(_key(p) for p in path)])
    return int(seq.generate_state(1, np.uint64)[0] >> 1)
