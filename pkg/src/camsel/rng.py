"""Seeded random-stream management.

All randomness in the package flows from a single root seed through named
sub-streams, so any stage (a single tree, a single sequence) can be
reproduced in isolation and results do not depend on scheduling order.
"""

from __future__ import annotations

import hashlib
import secrets

import numpy as np

__all__ = ["substream", "derive_seed", "fresh_seed"]


def _path_token(part: object) -> int:
    digest = hashlib.sha256(repr(part).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def substream(seed: int, *path: object) -> np.random.Generator:
    """Generator for the sub-stream named by ``path`` under ``seed``.

    Path elements may be strings or integers; distinct paths give
    statistically independent streams, and the same path always gives the
    same stream.
    """
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, *map(_path_token, path)])


def derive_seed(seed: int, *path: object) -> int:
    """Deterministic integer seed for a named sub-component."""
    return int(substream(seed, *path).integers(0, 2**63))


def fresh_seed() -> int:
    """Nondeterministic seed for runs where the user supplied none."""
    return secrets.randbits(63)
