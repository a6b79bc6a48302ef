"""Regenerative structure of the insertion process.

The chain ``M_t = max(M_{t-1}, Z_t) - 1`` started at 0 counts the free slots
to the left of the rightmost filled slot.  It is 0 exactly when the first t
elements occupy slots 1..t, which cuts the process into i.i.d. blocks.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels as K
from .monotone import lds_length, lis_length
from .perm import (InfinitePrefix, MallowsParams, Permutation, _as_params,
                   _check_stream, assign_positions, induce_finite)
from .rng import STREAMS_BLOCKS, GeometricStream, default_workers

STEP_CAP = 10 ** 9
_MAX_WINDOW = 1 << 22


@dataclass(frozen=True)
class ChainState:
    value: int

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("chain state must be >= 0")


@dataclass(frozen=True)
class Block:
    """One regeneration block: the block permutation and its length, LIS and LDS."""

    sigma: Permutation
    x: int
    y: int
    y_down: int

    def __post_init__(self):
        if len(self.sigma) != self.x:
            raise ValueError("block length does not match its permutation")
        if not (1 <= self.y <= self.x and 1 <= self.y_down <= self.x):
            raise ValueError("block statistics out of range")

    def is_indecomposable(self) -> bool:
        """No proper prefix of sigma maps onto an initial segment {1..m}."""
        run_max = np.maximum.accumulate(self.sigma.values)
        return not np.any(run_max[:-1] == np.arange(1, self.x))


@dataclass(frozen=True)
class Decomposition:
    """A prefix of the insertion process cut at its regeneration times."""

    blocks: tuple
    n: int
    s_n: int
    q_n: int
    t: tuple  # T_0 = 0 < T_1 < ... < T_{S_n}

    def reassemble(self) -> np.ndarray:
        """Positions of elements 1..T_{S_n} rebuilt from the blocks."""
        parts = [b.sigma.values + off for b, off in zip(self.blocks, self.t[:-1])]
        return np.concatenate(parts)

    @property
    def y(self) -> np.ndarray:
        return np.array([b.y for b in self.blocks], dtype=np.int64)

    @property
    def y_down(self) -> np.ndarray:
        return np.array([b.y_down for b in self.blocks], dtype=np.int64)


def chain_step(state, z: int) -> ChainState:
    """M' = max(M, z) - 1."""
    m = state.value if isinstance(state, ChainState) else int(state)
    if z < 1:
        raise ValueError("z must be >= 1")
    return ChainState(max(m, int(z)) - 1)


def chain_trajectory(z: Sequence[int], m0=0) -> np.ndarray:
    """States M_1..M_len(z) of the chain started from ``m0``."""
    z = np.ascontiguousarray(z, dtype=np.int64)
    if z.size and z.min() < 1:
        raise ValueError("z must be >= 1")
    m0 = m0.value if isinstance(m0, ChainState) else int(m0)
    out = np.empty(z.size, dtype=np.int64)
    K.trajectory_kernel(z, m0, out)
    return out


def regeneration_times(z: Sequence[int]) -> np.ndarray:
    """All t <= len(z) at which the chain from 0 sits at 0."""
    return np.flatnonzero(chain_trajectory(z, 0) == 0) + 1


# --------------------------------------------------------------------------
# stream drivers

def drive(stream: GeometricStream, run: Callable, total: int, draws_per_item: float) -> None:
    """Feed windows of ``stream`` to ``run(z, first) -> (done, used)`` until
    ``total`` items are finished.  A window that finishes nothing is doubled."""
    done = 0
    grow = 0
    while done < total:
        want = int((total - done) * draws_per_item * 1.05) + 64
        window = max(min(want, _MAX_WINDOW), grow)
        z = stream.peek(window)
        new_done, used = run(z, done)
        stream.advance(int(used))
        if new_done == done:
            grow = 2 * window
            if grow > STEP_CAP:
                raise RuntimeError(
                    f"item {done} still unfinished after {window} chain steps "
                    f"(q={stream.q}, seed={stream.seed}, stream_id={stream.stream_id})")
        else:
            grow = 0
        done = int(new_done)


def _expected_x(q: float) -> float:
    # 1/mu_0; a loose value is fine, it only sizes windows
    return 1.0 / math.prod(1.0 - q ** k for k in range(1, 200))


# --------------------------------------------------------------------------
# blocks

def sample_block(params, stream: GeometricStream) -> Block:
    """Run the insertion process from a regeneration point until the chain
    returns to 0, materialising the block permutation."""
    params = _as_params(params)
    _check_stream(params, stream)
    holes: list = []
    right = 0
    positions = []
    while True:
        if len(positions) >= STEP_CAP:
            raise RuntimeError(f"block exceeded {STEP_CAP} steps (stream {stream!r})")
        z = stream.draw()
        m = len(holes)
        if z > m:
            pos = right + z - m
            holes.extend(range(right + 1, pos))
            right = pos
        else:
            pos = holes.pop(z - 1)
        positions.append(pos)
        if not holes:
            break
    sigma = Permutation(positions, check=False)
    return Block(sigma, len(positions), lis_length(sigma), lds_length(sigma))


@dataclass
class BlockBatch:
    """Columnar block statistics (x, y, y_down) without the permutations."""

    x: np.ndarray
    y: np.ndarray
    y_down: np.ndarray
    q: float
    seed: int
    stream_ids: tuple = field(default_factory=tuple)

    def __len__(self) -> int:
        return int(self.x.size)

    def summary(self) -> dict:
        x = self.x.astype(np.float64)
        y = self.y.astype(np.float64)
        yd = self.y_down.astype(np.float64)
        mean_x = float(x.mean())
        return {
            "q": self.q,
            "count": len(self),
            "mean_x": mean_x,
            "mean_y": float(y.mean()),
            "mean_y_down": float(yd.mean()),
            "mean_x2": float((x * x).mean()),
            "mean_y2": float((y * y).mean()),
            "mean_xy": float((x * y).mean()),
            "mu0_hat": 1.0 / mean_x,
            "seed": self.seed,
            "stream_id_first": int(self.stream_ids[0]) if self.stream_ids else None,
            "stream_id_last": int(self.stream_ids[-1]) if self.stream_ids else None,
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "y_down"])
            w.writerows(zip(self.x.tolist(), self.y.tolist(), self.y_down.tolist()))

    @classmethod
    def concat(cls, parts: Sequence["BlockBatch"]) -> "BlockBatch":
        return cls(np.concatenate([p.x for p in parts]),
                   np.concatenate([p.y for p in parts]),
                   np.concatenate([p.y_down for p in parts]),
                   parts[0].q, parts[0].seed,
                   tuple(s for p in parts for s in p.stream_ids))


def sample_blocks(params, stream: GeometricStream, count: int) -> BlockBatch:
    """``count`` consecutive blocks from one stream (streaming mode: statistics only).

    Identical to ``count`` calls of :func:`sample_block` on the same stream.
    """
    params = _as_params(params)
    _check_stream(params, stream)
    x = np.empty(count, dtype=np.int64)
    y = np.empty(count, dtype=np.int64)
    yd = np.empty(count, dtype=np.int64)
    drive(stream, lambda z, first: K.blocks_kernel(z, x, y, yd, first), count,
          _expected_x(params.q))
    return BlockBatch(x, y, yd, params.q, stream.seed, (stream.stream_id,))


SHARD = 1 << 17


def block_batch(q: float, count: int, seed: int, stream_base: int = STREAMS_BLOCKS,
                workers: int | None = None) -> BlockBatch:
    """Blocks split into fixed shards of ``SHARD`` blocks, shard k on stream
    ``stream_base + k``.  The result does not depend on ``workers``."""
    params = MallowsParams(q)
    sizes = [min(SHARD, count - lo) for lo in range(0, count, SHARD)]

    def one(k):
        return sample_blocks(params, GeometricStream(params, seed, stream_base + k), sizes[k])

    workers = workers or default_workers()
    if workers == 1 or len(sizes) <= 1:
        parts = [one(k) for k in range(len(sizes))]
    else:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(one, range(len(sizes))))
    if not parts:
        empty = np.empty(0, dtype=np.int64)
        return BlockBatch(empty, empty.copy(), empty.copy(), params.q, seed, ())
    return BlockBatch.concat(parts)


# --------------------------------------------------------------------------
# decompositions of a finite prefix

def _regen_window(stream: GeometricStream, n: int) -> int:
    window = n + 256
    while True:
        t_end = K.first_zero_at_or_after(stream.peek(window), n)
        if t_end > 0:
            return int(t_end)
        window *= 2
        if window - n > STEP_CAP:
            raise RuntimeError(f"no regeneration within {STEP_CAP} steps after n={n}")


def decompose_prefix(n: int, params, stream: GeometricStream):
    """Run the process to the first regeneration time T_{S_n} >= n.

    Returns ``(Decomposition, Pi_n)``.  Consumes exactly T_{S_n} draws, so the
    blocks coincide with S_n successive :func:`sample_block` calls.
    """
    params = _as_params(params)
    _check_stream(params, stream)
    if n < 1:
        raise ValueError("n must be >= 1")
    t_end = _regen_window(stream, n)
    z = stream.take(t_end)
    prefix = assign_positions(z)
    pos = prefix.positions
    times = np.flatnonzero(np.maximum.accumulate(pos) == np.arange(1, t_end + 1)) + 1
    t = (0,) + tuple(int(v) for v in times)
    blocks = []
    for lo, hi in zip(t[:-1], t[1:]):
        sigma = Permutation(pos[lo:hi] - lo, check=False)
        blocks.append(Block(sigma, hi - lo, lis_length(sigma), lds_length(sigma)))
    dec = Decomposition(tuple(blocks), n, len(blocks), sum(b.y for b in blocks), t)
    return dec, induce_finite(InfinitePrefix(pos[:n]))


DECOMP_FIELDS = ("t_end", "s_n", "q_n", "y_last", "max_y", "max_y_down",
                 "max_y_down_before_last", "lis", "lds")


def decompose_stats(n: int, params, stream: GeometricStream, count: int = 1) -> dict:
    """Pathwise summaries of ``count`` successive decompositions of length-n prefixes.

    Each decomposition starts where the previous one regenerated.  Returns a
    dict of int arrays keyed by :data:`DECOMP_FIELDS`.
    """
    params = _as_params(params)
    _check_stream(params, stream)
    out = np.zeros((count, len(DECOMP_FIELDS)), dtype=np.int64)
    per_item = n + 4 * _expected_x(params.q)
    drive(stream, lambda z, first: K.decompose_many_kernel(z, n, out, first), count, per_item)
    return {name: out[:, c].copy() for c, name in enumerate(DECOMP_FIELDS)}
