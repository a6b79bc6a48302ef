"""Exhaustive-enumeration ground truth for small n."""
from __future__ import annotations

import math
from collections import defaultdict
from itertools import permutations
from typing import Callable

import numpy as np

from .monotone import lds_length, lis_length
from .perm import Permutation, inversions, lehmer_rank

MAX_N = 9
MAX_N_SMALL_Q = 6


def _check(n: int, q: float) -> None:
    if not 1 <= n <= MAX_N:
        raise ValueError(f"exact enumeration supports 1 <= n <= {MAX_N}, got {n}")
    if q <= 0:
        raise ValueError("q must be positive")
    # weights down to q^36 at n = 9; keep the dynamic range benign
    if min(q, 1 / q) < 0.1 and n > MAX_N_SMALL_Q:
        raise ValueError(f"for q outside [0.1, 10] exact enumeration is limited to n <= {MAX_N_SMALL_Q}")


def all_permutations(n: int) -> np.ndarray:
    """All n! permutations of 1..n in lexicographic order, as rows."""
    return np.array(list(permutations(range(1, n + 1))), dtype=np.int64).reshape(-1, n)


def inversion_counts(perms: np.ndarray) -> np.ndarray:
    perms = np.asarray(perms)
    n = perms.shape[1]
    inv = np.zeros(perms.shape[0], dtype=np.int64)
    for i in range(n - 1):
        inv += (perms[:, i:i + 1] > perms[:, i + 1:]).sum(axis=1)
    return inv


def mallows_pmf_array(n: int, q: float) -> tuple:
    """(perms, probs): lexicographic permutations with P = q^inv / Z.

    Any q > 0 is accepted, so Mallows(1/q) is available for reversal checks.
    """
    _check(n, q)
    perms = all_permutations(n)
    inv = inversion_counts(perms)
    w = float(q) ** inv.astype(np.float64)
    z = math.fsum(w.tolist())
    return perms, w / z


def enumerate_mallows(n: int, q: float) -> list:
    """All n! permutations with their Mallows(q) probabilities."""
    perms, probs = mallows_pmf_array(n, q)
    return [(Permutation(p, check=False), float(pr)) for p, pr in zip(perms, probs)]


_STATISTICS = {"lis": lis_length, "lds": lds_length, "inv": inversions}


def exact_statistic_distribution(n: int, q: float, statistic) -> dict:
    """Push the exact Mallows(q) pmf through ``statistic`` (callable or one of
    'lis', 'lds', 'inv').  Returns {value: probability} sorted by value."""
    f: Callable = _STATISTICS[statistic] if isinstance(statistic, str) else statistic
    perms, probs = mallows_pmf_array(n, q)
    acc = defaultdict(list)
    for p, pr in zip(perms, probs.tolist()):
        acc[int(f(Permutation(p, check=False)))].append(pr)
    return {k: math.fsum(v) for k, v in sorted(acc.items())}


def empirical_pmf(samples: np.ndarray) -> np.ndarray:
    """Frequencies of each permutation of [n], indexed in lexicographic order."""
    samples = np.atleast_2d(samples)
    n = samples.shape[1]
    counts = np.bincount(lehmer_rank(samples), minlength=math.factorial(n))
    return counts / samples.shape[0]


def tv_distance(p1, p2, universe=None) -> float:
    """Half the L1 distance between two pmfs.

    Arrays must have equal length.  Dicts are compared over the union of their
    keys (absent keys count as 0); if ``universe`` is given, keys outside it
    are an error.
    """
    if isinstance(p1, dict) or isinstance(p2, dict):
        if not (isinstance(p1, dict) and isinstance(p2, dict)):
            raise TypeError("cannot compare a dict pmf with an array pmf")
        keys = set(p1) | set(p2)
        if universe is not None:
            stray = keys - set(universe)
            if stray:
                raise ValueError(f"pmf support outside the universe: {sorted(stray)[:5]}")
        return 0.5 * math.fsum(abs(p1.get(k, 0.0) - p2.get(k, 0.0)) for k in keys)
    a = np.asarray(p1, dtype=np.float64)
    b = np.asarray(p2, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"pmf supports differ: {a.shape} vs {b.shape}")
    return 0.5 * math.fsum(np.abs(a - b).tolist())
