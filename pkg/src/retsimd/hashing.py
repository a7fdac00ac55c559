"""Deterministic hashing utilities.

All randomness that must be reproducible across processes is derived from
keyed blake2b digests, never from the builtin ``hash`` (which is salted per
process).  A digest is turned into a ``numpy.random.Generator`` through
``SeedSequence`` so independent namespaces give independent streams.
"""

from __future__ import annotations

import hashlib
from functools import lru_cache

import numpy as np

_PERSON = b"retsimd-v1"


def stable_digest(*parts: str | bytes | int) -> bytes:
    """Return a 32-byte blake2b digest of ``parts``.

    Parts are framed with a type tag and length prefix so distinct
    sequences can never collide by concatenation.
    """
    h = hashlib.blake2b(digest_size=32, person=_PERSON)
    for part in parts:
        if isinstance(part, str):
            raw, tag = part.encode("utf-8"), b"s"
        elif isinstance(part, bytes):
            raw, tag = part, b"b"
        elif isinstance(part, (int, np.integer)):
            raw, tag = int(part).to_bytes(16, "little", signed=True), b"i"
        else:
            raise TypeError(f"unhashable part type: {type(part).__name__}")
        h.update(tag)
        h.update(len(raw).to_bytes(8, "little"))
        h.update(raw)
    return h.digest()


def stable_uint64(*parts: str | bytes | int) -> int:
    """First 8 digest bytes as an unsigned 64-bit integer."""
    return int.from_bytes(stable_digest(*parts)[:8], "little")


def rng_from(*parts: str | bytes | int) -> np.random.Generator:
    """Deterministic generator keyed by ``parts``."""
    digest = stable_digest(*parts)
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 32, 4)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))


@lru_cache(maxsize=65536)
def unit_vector(dim: int, *parts: str | bytes | int) -> np.ndarray:
    """Unit-norm float64 vector keyed by ``parts``.

    The returned array is cached and marked read-only; copy before
    mutating.
    """
    if dim <= 0:
        raise ValueError(f"dim must be positive, got {dim}")
    rng = rng_from("unit", dim, *parts)
    v = rng.standard_normal(dim)
    norm = float(np.linalg.norm(v))
    while norm < 1e-12:  # astronomically unlikely, but keeps the contract total
        v = rng.standard_normal(dim)
        norm = float(np.linalg.norm(v))
    v /= norm
    v.setflags(write=False)
    return v
