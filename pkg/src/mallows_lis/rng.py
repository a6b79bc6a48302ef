"""Seeded, splittable streams of Geom(1-q) draws.

Every random quantity in the package is driven by a :class:`GeometricStream`
identified by ``(seed, stream_id)``.  Streams are children of a
:class:`numpy.random.SeedSequence` keyed by ``stream_id``, so distinct ids
give statistically independent, non-overlapping PCG64 states, and the same
pair always replays the same draws.
"""
from __future__ import annotations

import math
import os

import numpy as np

DEFAULT_SEED = 20160524

# Disjoint stream-id ranges, one per consumer.  Estimation of constants and
# the experiments that use those constants never share randomness.
STREAMS_BLOCKS = 0
STREAMS_CONSTANTS = 1 << 32
STREAMS_CLT = 2 << 32
STREAMS_LDS = 3 << 32
STREAMS_VARIANCE = 4 << 32
STREAMS_CHAIN = 5 << 32
STREAMS_SAMPLER = 6 << 32

_MASK64 = (1 << 64) - 1


def make_generator(seed: int, stream_id: int) -> np.random.Generator:
    """PCG64 generator for the child ``stream_id`` of ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=(int(stream_id) & _MASK64,))
    return np.random.Generator(np.random.PCG64(ss))


def default_workers() -> int:
    env = os.environ.get("MALLOWS_LIS_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _check_q(q: float) -> float:
    q = float(q)
    if not (0.0 < q < 1.0):
        raise ValueError(f"q must lie strictly inside (0, 1), got {q!r}")
    return q


class GeometricStream:
    """Infinite, replayable sequence of i.i.d. Geom(1-q) variables on {1, 2, ...}.

    Draws are produced by inverse transform, ``1 + floor(ln U / ln q)``, one
    uniform per draw.  Internally draws are generated in vectorised chunks and
    buffered; chunking never changes the sequence.

    Parameters
    ----------
    q : float or MallowsParams
        Parameter in (0, 1).
    seed, stream_id : int
        64-bit identifiers of the stream.
    """

    _MIN_CHUNK = 4096

    def __init__(self, q, seed: int = DEFAULT_SEED, stream_id: int = 0):
        self.q = _check_q(getattr(q, "q", q))
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.position = 0
        self._log_q = math.log(self.q)
        self._rng = make_generator(self.seed, self.stream_id)
        self._buf = np.empty(0, dtype=np.int64)
        self._head = 0

    def __repr__(self) -> str:
        return (f"GeometricStream(q={self.q!r}, seed={self.seed}, "
                f"stream_id={self.stream_id}, position={self.position})")

    def _generate(self, k: int) -> np.ndarray:
        # 1 - U lies in (0, 1]: ln never sees 0, and U' = 1 maps to k = 1.
        u = 1.0 - self._rng.random(k)
        return 1 + np.floor(np.log(u) / self._log_q).astype(np.int64)

    def peek(self, k: int) -> np.ndarray:
        """Return (without consuming) the next ``k`` draws as a read-only view."""
        avail = self._buf.size - self._head
        if avail < k:
            fresh = self._generate(max(k - avail, self._MIN_CHUNK))
            self._buf = np.concatenate([self._buf[self._head:], fresh])
            self._head = 0
        out = self._buf[self._head:self._head + k]
        out.flags.writeable = False
        return out

    def advance(self, k: int) -> None:
        """Consume ``k`` draws previously obtained through :meth:`peek`."""
        if k < 0 or k > self._buf.size - self._head:
            raise ValueError("cannot advance past buffered draws")
        self._head += k
        self.position += k

    def take(self, k: int) -> np.ndarray:
        out = self.peek(k).copy()
        self.advance(k)
        return out

    def draw(self) -> int:
        return int(self.take(1)[0])

    def spawn(self, offset: int) -> "GeometricStream":
        """A fresh stream with the same seed and ``stream_id + offset``."""
        return GeometricStream(self.q, self.seed, self.stream_id + offset)


def geometric_draw(stream: GeometricStream) -> int:
    """One Geom(1-q) draw, P(Z = k) = (1-q) q^(k-1) for k >= 1."""
    return stream.draw()
