"""Finite permutations, the infinite Mallows insertion process and exact weights."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels as K
from .rng import GeometricStream, _check_q


@dataclass(frozen=True)
class MallowsParams:
    """Parameter of the Mallows(q) measure, restricted to 0 < q < 1."""

    q: float

    def __post_init__(self):
        object.__setattr__(self, "q", _check_q(self.q))


def _as_params(params) -> MallowsParams:
    return params if isinstance(params, MallowsParams) else MallowsParams(params)


class Permutation:
    """A permutation of [n] in one-line form: ``values[i-1] = pi(i)``.

    Values are 1-based.  Instances are immutable and hashable.
    """

    __slots__ = ("_v",)

    def __init__(self, values: Iterable[int], *, check: bool = True):
        v = np.array(values, dtype=np.int64).reshape(-1)
        if check:
            n = v.size
            if n == 0:
                raise ValueError("empty permutation")
            if v.min() < 1 or v.max() > n or np.bincount(v, minlength=n + 1)[1:].max() != 1:
                raise ValueError("entries must be a permutation of 1..n")
        v.flags.writeable = False
        self._v = v

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(np.arange(1, n + 1), check=False)

    @classmethod
    def from_array_form(cls, arr: Sequence[int]) -> "Permutation":
        """Inverse of :meth:`array_form`: ``arr[j-1]`` is the element at position j."""
        a = np.asarray(arr, dtype=np.int64)
        inv = np.empty_like(a)
        inv[a - 1] = np.arange(1, a.size + 1)
        return cls(inv)

    @property
    def values(self) -> np.ndarray:
        return self._v

    @property
    def n(self) -> int:
        return self._v.size

    def __len__(self) -> int:
        return self._v.size

    def __getitem__(self, i):
        return self._v[i]

    def __iter__(self):
        return iter(self._v.tolist())

    def __eq__(self, other) -> bool:
        if isinstance(other, Permutation):
            return np.array_equal(self._v, other._v)
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self._v.tobytes())

    def __repr__(self) -> str:
        if self.n <= 20:
            return f"Permutation({self._v.tolist()})"
        return f"Permutation(n={self.n})"

    def to_tuple(self) -> tuple:
        return tuple(self._v.tolist())

    def array_form(self) -> np.ndarray:
        """Position -> element: entry j is the element i with pi(i) = j."""
        out = np.empty_like(self._v)
        out[self._v - 1] = np.arange(1, self.n + 1)
        return out

    def to_json(self) -> str:
        return json.dumps(self._v.tolist())

    @classmethod
    def from_json(cls, text: str) -> "Permutation":
        return cls(json.loads(text))


def _values(p) -> np.ndarray:
    if isinstance(p, Permutation):
        return p.values
    return Permutation(p).values


@dataclass(frozen=True)
class InfinitePrefix:
    """First n values of the infinite permutation: ``positions[i-1]`` is the
    position given to element i."""

    positions: np.ndarray

    @property
    def n(self) -> int:
        return int(self.positions.size)

    def array_form(self) -> list:
        """Slots 1..max(position) read left to right; ``None`` marks an empty slot."""
        row = [None] * int(self.positions.max())
        for elem, pos in enumerate(self.positions.tolist(), start=1):
            row[pos - 1] = elem
        return row


def assign_positions(z: Sequence[int]) -> InfinitePrefix:
    """Place element i in the z_i-th position still unassigned.

    O(n log n): a Fenwick tree over the window [1, n + max z] answers the
    select-k-th-free-slot query.
    """
    z = np.ascontiguousarray(z, dtype=np.int64)
    if z.size and z.min() < 1:
        raise ValueError("geometric draws must be >= 1")
    out = np.empty(z.size, dtype=np.int64)
    if z.size:
        K.assign_positions_kernel(z, out)
    return InfinitePrefix(out)


def induce_finite(prefix: InfinitePrefix) -> Permutation:
    """Pi_n(i) = rank of position i among the first n positions."""
    pos = np.ascontiguousarray(prefix.positions, dtype=np.int64)
    if pos.size == 0:
        raise ValueError("prefix must have length >= 1")
    out = np.empty(pos.size, dtype=np.int64)
    K.induce_kernel(pos, out)
    return Permutation(out, check=False)


def _check_stream(params: MallowsParams, stream: GeometricStream) -> None:
    if not math.isclose(stream.q, params.q, rel_tol=0, abs_tol=0):
        raise ValueError(f"stream q={stream.q} does not match params q={params.q}")


def sample_mallows(n: int, params, stream: GeometricStream) -> Permutation:
    """Mallows(q) permutation of [n] induced by the insertion process."""
    params = _as_params(params)
    _check_stream(params, stream)
    if n < 1:
        raise ValueError("n must be >= 1")
    return induce_finite(assign_positions(stream.take(n)))


def sample_mallows_batch(n: int, count: int, params, stream: GeometricStream) -> np.ndarray:
    """``count`` consecutive samples as a (count, n) int array.

    Row r equals the r-th result of repeated :func:`sample_mallows` calls on the
    same stream.
    """
    params = _as_params(params)
    _check_stream(params, stream)
    if n < 1 or count < 0:
        raise ValueError("need n >= 1 and count >= 0")
    out = np.empty((count, n), dtype=np.int64)
    step = max(1, (1 << 22) // n)
    for lo in range(0, count, step):
        hi = min(count, lo + step)
        z = stream.take((hi - lo) * n)
        K.sample_batch_kernel(z, n, out[lo:hi])
    return out


def inversions(p) -> int:
    """Number of pairs i < j with p(i) > p(j), in O(n log n)."""
    return int(K.inversions_kernel(_values(p)))


def kendall_tau(p, ref) -> int:
    """Pairs i < j ordered increasingly by ``ref`` but decreasingly by ``p``.

    Reduces to :func:`inversions` when ``ref`` is the identity.  General
    references use a quadratic vectorised scan.
    """
    a = _values(p)
    r = _values(ref)
    if a.size != r.size:
        raise ValueError(f"length mismatch: {a.size} != {r.size}")
    if np.array_equal(r, np.arange(1, r.size + 1)):
        return inversions(a)
    total = 0
    for i in range(a.size - 1):
        total += int(np.count_nonzero((r[i + 1:] > r[i]) & (a[i + 1:] < a[i])))
    return total


def reversal(p) -> Permutation:
    """pi^R(i) = n + 1 - pi(i)."""
    v = _values(p)
    return Permutation(v.size + 1 - v, check=False)


# Direct products are safe well below this size; above it we only work in logs.
_LOG_SPACE_N = 300


def log_partition_function(n: int, q: float) -> float:
    """log Z_{n,q} = sum_i log((1 - q^i) / (1 - q))."""
    if n < 1:
        raise ValueError("n must be >= 1")
    q = float(q)
    if q <= 0:
        raise ValueError("q must be positive")
    if q == 1.0:
        return math.lgamma(n + 1)
    i = np.arange(1, n + 1, dtype=np.float64)
    if q < 1:
        terms = np.log1p(-q ** i) - math.log1p(-q)
    else:
        # [i]_q = q^(i-1) [i]_{1/q}
        r = 1.0 / q
        terms = (i - 1) * math.log(q) + np.log1p(-r ** i) - math.log1p(-r)
    return math.fsum(terms.tolist())


def partition_function(n: int, q: float) -> float:
    """Z_{n,q} = prod_{i=1}^n (q^i - 1)/(q - 1), the q-factorial [n]_q!.

    Computed as a direct product for n <= 300 and through
    :func:`log_partition_function` beyond (raises OverflowError if the value
    does not fit in a double).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    q = float(q)
    if n > _LOG_SPACE_N:
        return math.exp(log_partition_function(n, q))
    if q == 1.0:
        return float(math.factorial(n))
    z = 1.0
    for i in range(1, n + 1):
        z *= (1.0 - q ** i) / (1.0 - q)
    return z


def log_pmf(p, q: float) -> float:
    """log P(Pi = p) = inv(p) log q - log Z_{n,q}."""
    v = _values(p)
    return inversions(v) * math.log(q) - log_partition_function(v.size, q)


def lehmer_rank(perms: np.ndarray) -> np.ndarray:
    """Lexicographic index of each row of a (count, n) array of permutations."""
    perms = np.atleast_2d(np.asarray(perms, dtype=np.int64))
    count, n = perms.shape
    ranks = np.zeros(count, dtype=np.int64)
    for i in range(n):
        smaller_after = (perms[:, i + 1:] < perms[:, i:i + 1]).sum(axis=1)
        ranks += smaller_after * math.factorial(n - 1 - i)
    return ranks
