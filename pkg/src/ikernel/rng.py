"""Counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by the
user seed and a path of integers naming the purpose of the draw (replicate,
sample block, ...). Two draws with the same seed and path are identical no
matter which worker makes them or in which order.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

# samples per substream; a sample's stream depends only on (seed, path, m // BLOCK)
BLOCK = 256

_MASK64 = (1 << 64) - 1


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    part = int(part)
    if part < 0:
        raise ValueError("stream path entries must be nonnegative")
    return part


@dataclass(frozen=True)
class RandomStream:
    """Seed plus a path identifying one independent substream."""

    seed: int
    path: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "path", tuple(_key(p) for p in self.path))

    def child(self, *parts) -> "RandomStream":
        return RandomStream(self.seed, self.path + tuple(_key(p) for p in parts))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence([self.seed, len(self.path), *self.path])
        key = ss.generate_state(2, dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def blocks(self, M: int, block: int = BLOCK):
        """Yield ``(start, stop, generator)`` covering samples ``0..M-1``."""
        for b, start in enumerate(range(0, M, block)):
            yield start, min(start + block, M), self.child("block", b).generator()


def as_stream(rng) -> RandomStream:
    """Accept a RandomStream, an int seed or None (seed 0)."""
    if isinstance(rng, RandomStream):
        return rng
    if rng is None:
        return RandomStream(0)
    if isinstance(rng, (int, np.integer)):
        return RandomStream(int(rng))
    raise TypeError(f"expected RandomStream or integer seed, got {type(rng).__name__}")
