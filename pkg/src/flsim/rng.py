"""Deterministic random streams.

Every random decision in a run is drawn from a stream keyed by the global
seed plus a purpose tag (and usually a round and client id).  Keys are
derived with SplitMix64 so any worker can open any stream independently of
execution order; the streams themselves are counter-based (Philox), so the
same key always yields the same draws on every platform.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _splitmix64(state: int) -> int:
    """One SplitMix64 step: advance by the golden ratio, then fully mix."""
    z = (state + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _fnv1a(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def _encode(part) -> int:
    if isinstance(part, bool):
        raise TypeError("bool is not a valid stream key part")
    if isinstance(part, (int, np.integer)):
        return int(part) & _MASK64
    if isinstance(part, str):
        return _fnv1a(part.encode("utf-8"))
    raise TypeError(f"cannot key a stream with {type(part).__name__}")


def derive_key(seed: int, *parts) -> int:
    """Derive a 64-bit stream key from a seed and a sequence of tags.

    Tags may be ints or strings.  Each tag is folded into a fully mixed
    SplitMix64 state before the next one, so distinct (seed, tags...)
    tuples map to independent-looking keys.
    """
    state = _splitmix64(int(seed) & _MASK64)
    for part in parts:
        state = _splitmix64(state ^ _encode(part))
    return state


def stream(seed: int, *parts) -> np.random.Generator:
    """Open the random stream identified by (seed, *parts)."""
    return np.random.Generator(np.random.Philox(key=derive_key(seed, *parts)))
