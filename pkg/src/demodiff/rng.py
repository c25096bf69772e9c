"""Counter-based random streams (Philox4x64-10).

A stream is identified by a 128-bit key ``(seed, stream_id)``. Word ``i`` of a
stream is lane ``i % 4`` of the Philox4x64-10 block with counter
``(i // 4, 0, 0, 0)``; because every word is a pure function of
``(seed, stream_id, i)``, streams can be split and consumed in any order or in
parallel and still reproduce exactly.

Derived values:

* integer in ``[0, n)``: ``(word * n) >> 64`` (bias at most ``n / 2**64``);
* uniform in ``[0, 1)``: ``(word >> 11) * 2**-53``.

Test vectors (Random123 known-answer tests, key ``(0, 0)``, counter ``(0,0,0,0)``)::

    16554d9eca36314c db20fe9d672d0fdc d7e772cee186176b 7e68b68aec7ba23b

``stream_id`` packs a purpose tag in the top 16 bits and an index in the low
48 bits, see :func:`stream_id`.
"""

from __future__ import annotations

import numpy as np

from . import kernels

MASK64 = (1 << 64) - 1

# purpose tags for stream_id
BOOTSTRAP = 1
COHORT = 2
SYNTH_SCORES = 3
SYNTH_EMBEDDINGS = 4
SUBSAMPLE = 5


def stream_id(purpose: int, index: int = 0) -> int:
    if not 0 <= purpose < (1 << 16):
        raise ValueError("purpose tag must fit in 16 bits")
    if not 0 <= index < (1 << 48):
        raise ValueError("stream index must fit in 48 bits")
    return (purpose << 48) | index


class Stream:
    """Sequential reader over one keyed Philox stream."""

    def __init__(self, seed: int, sid: int, position: int = 0):
        self.seed = int(seed) & MASK64
        self.sid = int(sid) & MASK64
        self.position = int(position)

    def words(self, n: int) -> np.ndarray:
        out = kernels.random_words(self.seed, self.sid, self.position, n)
        self.position += n
        return out

    def integers(self, bound: int, n: int) -> np.ndarray:
        out = kernels.uniform_indices(self.seed, self.sid, self.position, n, bound)
        self.position += n
        return out

    def uniform(self, n: int) -> np.ndarray:
        return (self.words(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)

    def numpy_generator(self) -> np.random.Generator:
        """A numpy Generator on the same Philox key, for distribution sampling."""
        return np.random.Generator(np.random.Philox(key=[self.seed, self.sid]))


def sample_without_replacement(stream: Stream, n: int, k: int) -> np.ndarray:
    """``k`` distinct indices from ``range(n)`` (partial Fisher-Yates), in draw order."""
    if not 0 <= k <= n:
        raise ValueError(f"cannot draw {k} distinct items from {n}")
    pool = np.arange(n, dtype=np.int64)
    for i in range(k):
        j = i + int(stream.integers(n - i, 1)[0])
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k].copy()
