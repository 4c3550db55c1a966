"""Named, counter-based random substreams.

Every consumer of randomness asks for its own stream keyed by the master seed
plus a path of names/indices, so adding a consumer never shifts another one's
draws and results do not depend on evaluation order or worker count.
"""

from __future__ import annotations

import zlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def _key(part: str | int) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if part < 0:
        raise ValueError(f"substream index must be non-negative, got {part}")
    return int(part)


def substream(seed: int, *keys: str | int) -> np.random.Generator:
    """Return an independent Philox generator for ``(seed, *keys)``.

    Args:
        seed: Master 64-bit seed (negative values are reduced modulo 2**64).
        keys: Stream path, e.g. ``("forest", tree_index)``.

    Returns:
        A fresh ``numpy.random.Generator``.
    """
    sequence = np.random.SeedSequence(
        int(seed) & SEED_MASK, spawn_key=tuple(_key(k) for k in keys)
    )
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(seed: int, *keys: str | int) -> int:
    """Derive a 64-bit child seed, for handing to code that takes an int."""
    return int(substream(seed, *keys).integers(0, 2**63 - 1))
