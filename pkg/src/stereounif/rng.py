"""Seedable, splittable random streams.

Every stream is a Philox (counter-based) generator seeded from a
``numpy.random.SeedSequence``. Substreams are derived either positionally
(``split``) or from a string key (``substream``), so any Monte Carlo cell can
be re-run in isolation from ``(master seed, key)``.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _key_words(key: str) -> tuple[int, ...]:
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))


class RandomStream:
    """A reproducible random stream with independent substreams.

    Parameters
    ----------
    seed : int
        Master seed (non-negative).
    path : tuple of str, optional
        Keys of the substream chain leading to this stream, kept for
        provenance only.
    """

    def __init__(self, seed: int = 0, *, _seq: np.random.SeedSequence | None = None,
                 path: tuple[str, ...] = ()):
        if _seq is None:
            if seed < 0:
                raise ValueError("seed must be non-negative")
            _seq = np.random.SeedSequence(seed)
        self.seed = int(seed)
        self.path = path
        self._seq = _seq
        self.generator = np.random.Generator(np.random.Philox(_seq))

    @property
    def key(self) -> str:
        return "/".join(self.path)

    def substream(self, key: str) -> "RandomStream":
        """Stream determined only by this stream's seed lineage and ``key``."""
        seq = np.random.SeedSequence(
            self._seq.entropy, spawn_key=tuple(self._seq.spawn_key) + _key_words(key)
        )
        return RandomStream(self.seed, _seq=seq, path=self.path + (key,))

    def split(self, n: int) -> list["RandomStream"]:
        """``n`` independent substreams, indexed ``0..n-1``."""
        return [self.substream(f"#{i}") for i in range(n)]

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.seed}, key={self.key!r})"


def as_stream(rng) -> RandomStream:
    """Coerce an int seed or ``RandomStream`` into a ``RandomStream``."""
    if isinstance(rng, RandomStream):
        return rng
    if rng is None:
        return RandomStream(0)
    return RandomStream(int(rng))
