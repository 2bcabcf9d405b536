"""Keyed deterministic random streams.

Every stochastic component draws from its own stream, derived from the
experiment seed plus a structured key (e.g. ``stream(seed, layout_id,
"choice")``). Streams are independent, order-insensitive across
components, and reproducible on any platform, so work can be split
across processes without changing results.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_part(part) -> int:
    if isinstance(part, (bool, float)):
        raise TypeError(f"stream key parts must be ints or strings, got {part!r}")
    if isinstance(part, (int, np.integer)):
        return int(part)
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"stream key parts must be ints or strings, got {part!r}")


def stream(seed: int, *key) -> np.random.Generator:
    """Independent generator for (seed, key...), stable across runs."""
    parts = [_key_part(seed)] + [_key_part(k) for k in key]
    return np.random.default_rng(np.random.SeedSequence(parts))
