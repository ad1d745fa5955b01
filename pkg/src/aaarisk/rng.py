"""Deterministic random streams keyed by (seed, purpose, index...)."""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def derive_rng(seed: int, *keys) -> np.random.Generator:
    """Independent generator for ``seed`` and a tuple of string/int keys.

    The same keys always give the same stream regardless of call order, so
    work split across threads or chunks reproduces the sequential result.
    """
    if isinstance(seed, np.random.Generator):
        raise TypeError("pass an integer seed, not a Generator")
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *map(_key, keys)]))
