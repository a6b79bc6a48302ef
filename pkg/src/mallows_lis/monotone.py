"""Longest increasing / decreasing subsequence lengths."""
from __future__ import annotations

from bisect import bisect_left

import numpy as np

from . import _kernels as K
from .perm import _values

BRUTEFORCE_MAX_N = 20


def lis_length(p) -> int:
    """Length of a longest increasing subsequence, by patience sorting (O(n log n))."""
    v = _values(p)
    return int(K.lis_kernel(v, 1))


def lds_length(p) -> int:
    """Length of a longest decreasing subsequence; equals LIS of the reversal."""
    v = _values(p)
    return int(K.lis_kernel(v, -1))


def lis_bruteforce(p) -> int:
    """Quadratic dynamic programme, kept separate from patience sorting as a test oracle."""
    v = _values(p).tolist()
    n = len(v)
    if n > BRUTEFORCE_MAX_N:
        raise ValueError(f"lis_bruteforce is limited to n <= {BRUTEFORCE_MAX_N}, got {n}")
    best = [1] * n
    for j in range(n):
        for i in range(j):
            if v[i] < v[j] and best[i] + 1 > best[j]:
                best[j] = best[i] + 1
    return max(best)


def lis_witness(p) -> list:
    """One longest increasing subsequence (values), via patience piles with
    predecessor links.  Debugging aid; not used on hot paths."""
    v = _values(p).tolist()
    tops: list = []
    top_idx: list = []
    prev = [-1] * len(v)
    for i, x in enumerate(v):
        j = bisect_left(tops, x)
        if j == len(tops):
            tops.append(x)
            top_idx.append(i)
        else:
            tops[j] = x
            top_idx[j] = i
        prev[i] = top_idx[j - 1] if j > 0 else -1
    out = []
    i = top_idx[-1] if top_idx else -1
    while i >= 0:
        out.append(v[i])
        i = prev[i]
    return out[::-1]


def lis_lds_rows(perms: np.ndarray) -> tuple:
    """LIS and LDS of every row of a (count, n) array."""
    perms = np.ascontiguousarray(perms, dtype=np.int64)
    up = np.array([K.lis_kernel(r, 1) for r in perms], dtype=np.int64)
    dn = np.array([K.lis_kernel(r, -1) for r in perms], dtype=np.int64)
    return up, dn
