"""
Counter-based random streams.

Every random quantity used by the simulator is a pure function of
``(master seed, agent, round, purpose)``.  A stream is a Philox generator
whose key is hashed from ``(seed, agent, purpose)`` and whose counter is
positioned at the start of the block reserved for ``round``; nothing is
carried between rounds, so agents can be evaluated in any order (or in
parallel) without changing a single bit of output.

Draws are taken as raw 64-bit words and mapped to floats explicitly, which
keeps the number of words consumed per variate fixed.  That is what lets
:class:`StreamBank` pre-draw whole chunks of rounds at once and still agree
exactly with :func:`derive_stream`.
"""

from __future__ import annotations

import zlib

import numpy as np
from numpy.random import Generator, Philox, SeedSequence
from scipy.special import ndtri

__all__ = [
    "derive_stream",
    "raw_draws",
    "open_uniform",
    "standard_normal",
    "StreamBank",
]

_WORDS_PER_BLOCK = 4  # Philox4x64 emits four words per counter increment
_TWO_M52 = 2.0 ** -52


def _purpose_code(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def _blocks(width: int) -> int:
    if width < 1:
        raise ValueError("width must be >= 1")
    return -(-width // _WORDS_PER_BLOCK)


def _key(seed: int, agent: int, purpose: str) -> np.ndarray:
    if seed < 0 or agent < 0:
        raise ValueError("seed and agent must be non-negative")
    ss = SeedSequence([int(seed), int(agent), _purpose_code(purpose)])
    return ss.generate_state(2, np.uint64)


def derive_stream(seed: int, agent: int, round: int, purpose: str, width: int = 4) -> Generator:
    """Return the generator reserved for ``(seed, agent, round, purpose)``.

    ``width`` is the number of raw words reserved per round; it must match
    between producers and consumers of the same stream.  A consumer may
    draw at most ``width`` words from the returned generator.
    """
    if round < 0:
        raise ValueError("round must be non-negative")
    bg = Philox(key=_key(seed, agent, purpose), counter=0)
    bg.advance(int(round) * _blocks(width))
    return Generator(bg)


def raw_draws(rng: Generator, count: int) -> np.ndarray:
    """Take ``count`` raw 64-bit words from ``rng``."""
    return rng.bit_generator.random_raw(count)


def open_uniform(raw) -> np.ndarray:
    """Map raw words to uniforms on the open interval (0, 1).

    52 bits are kept so that the half-step offset stays representable and
    the largest word maps strictly below 1.
    """
    raw = np.asarray(raw, dtype=np.uint64)
    return ((raw >> np.uint64(12)).astype(np.float64) + 0.5) * _TWO_M52


def standard_normal(raw) -> np.ndarray:
    """Inverse-CDF standard normals, one raw word per variate."""
    return ndtri(open_uniform(raw))


class StreamBank:
    """Chunked access to the streams of many seeds and agents.

    ``draws(purpose, k)`` returns raw words of shape ``(S, n, width)`` for
    round ``k``; row ``[s, i]`` equals the first ``width`` words of
    ``derive_stream(seeds[s], i, k, purpose, width)``.
    """

    def __init__(self, seeds, n_agents: int, width: int, chunk: int = 512):
        self.seeds = [int(s) for s in seeds]
        self.n_agents = int(n_agents)
        self.width = int(width)
        self.chunk = int(chunk)
        self._blocks = _blocks(self.width)
        self._keys = {}
        self._cache = {}

    def _stream_key(self, seed, agent, purpose):
        k = (seed, agent, purpose)
        if k not in self._keys:
            self._keys[k] = _key(seed, agent, purpose)
        return self._keys[k]

    def _fill(self, purpose: str, c: int) -> np.ndarray:
        words = self._blocks * _WORDS_PER_BLOCK
        out = np.empty((self.chunk, len(self.seeds), self.n_agents, self.width), dtype=np.uint64)
        for s, seed in enumerate(self.seeds):
            for i in range(self.n_agents):
                bg = Philox(key=self._stream_key(seed, i, purpose), counter=0)
                bg.advance(c * self.chunk * self._blocks)
                block = bg.random_raw(self.chunk * words).reshape(self.chunk, words)
                out[:, s, i, :] = block[:, : self.width]
        return out

    def draws(self, purpose: str, k: int) -> np.ndarray:
        c, r = divmod(int(k), self.chunk)
        entry = self._cache.get(purpose)
        if entry is None or entry[0] != c:
            entry = (c, self._fill(purpose, c))
            self._cache[purpose] = entry
        return entry[1][r]
