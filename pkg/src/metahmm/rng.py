"""Counter-mode deterministic random generator.

Every random draw in this package comes from :class:`HashRng`, a BLAKE2b
counter generator. The construction is fully specified so an independent
implementation can reproduce any stream bit-for-bit:

1. The stream key is ``blake2b(tag, digest_size=32)`` where ``tag`` is the
   UTF-8 encoding of the key parts joined with ``"|"`` (each part rendered
   with ``str()``).
2. Block ``i`` of the stream is ``blake2b(le64(i), key=key, digest_size=64)``,
   yielding eight little-endian 64-bit words per block. Words are consumed
   in order within a block, blocks in counter order.
3. Derived quantities:
   - float64 in [0, 1): ``(word >> 11) * 2**-53``
   - integer below ``n``: rejection sampling on words, accepting
     ``word % n`` only when ``word < 2**64 - (2**64 % n)`` (no modulo bias)
   - permutations: Fisher-Yates driven by the bounded-integer draws above
   - categorical draws: inverse CDF over the cumulative sum of the weights

Independent streams are obtained by construction, not splitting: key parts
name the purpose (e.g. ``HashRng(seed, "base", i)``), so concurrent
consumers never share a stream.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

_WORDS_PER_BLOCK = 8
_U64 = 2**64


class HashRng:
    """Deterministic generator keyed by an arbitrary tuple of parts."""

    def __init__(self, *key_parts: object):
        if not key_parts:
            raise ValueError("HashRng requires at least one key part")
        tag = "|".join(str(p) for p in key_parts)
        self._key = hashlib.blake2b(tag.encode("utf-8"), digest_size=32).digest()
        self._block_index = 0
        self._buffer: list[int] = []

    def _next_block(self) -> None:
        data = struct.pack("<Q", self._block_index)
        digest = hashlib.blake2b(data, key=self._key, digest_size=64).digest()
        self._block_index += 1
        self._buffer.extend(struct.unpack("<8Q", digest))

    def u64(self, n: int | None = None):
        """Draw one word (``n is None``) or an array of ``n`` words."""
        count = 1 if n is None else int(n)
        while len(self._buffer) < count:
            self._next_block()
        out = self._buffer[:count]
        del self._buffer[:count]
        if n is None:
            return out[0]
        return np.array(out, dtype=np.uint64)

    def random(self, n: int | None = None):
        """Uniform float64 in [0, 1), scalar or length-``n`` array."""
        if n is None:
            return (self.u64() >> 11) * 2.0**-53
        return (self.u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def below(self, bound: int) -> int:
        """Unbiased uniform integer in [0, bound)."""
        if bound <= 0:
            raise ValueError(f"bound must be positive, got {bound}")
        limit = _U64 - (_U64 % bound)
        while True:
            w = self.u64()
            if w < limit:
                return w % bound

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        out = np.arange(n, dtype=np.int64)
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            out[i], out[j] = out[j], out[i]
        return out

    def subset(self, n: int, k: int) -> np.ndarray:
        """First k entries of a Fisher-Yates permutation of range(n), sorted."""
        if not 0 <= k <= n:
            raise ValueError(f"need 0 <= k <= n, got k={k}, n={n}")
        pool = np.arange(n, dtype=np.int64)
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        picked = pool[:k].copy()
        picked.sort()
        return picked

    def choice(self, pvals: np.ndarray) -> int:
        """One categorical draw by inverse CDF over ``pvals``."""
        cum = np.cumsum(pvals)
        r = self.random() * cum[-1]
        idx = int(np.searchsorted(cum, r, side="right"))
        return min(idx, len(pvals) - 1)

    def choices(self, pvals: np.ndarray, n: int) -> np.ndarray:
        """n categorical draws by inverse CDF (one uniform per draw)."""
        cum = np.cumsum(pvals)
        r = self.random(n) * cum[-1]
        idx = np.searchsorted(cum, r, side="right")
        return np.minimum(idx, len(pvals) - 1).astype(np.int64)
