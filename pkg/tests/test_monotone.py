import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mallows_lis.monotone import (lds_length, lis_bruteforce, lis_lds_rows, lis_length,
                                  lis_witness)
from mallows_lis.perm import Permutation, reversal, sample_mallows
from mallows_lis.rng import GeometricStream

perms_st = st.integers(1, 20).flatmap(lambda n: st.permutations(list(range(1, n + 1))))


def test_examples():
    assert lis_length(Permutation.identity(5)) == 5
    assert lis_length([3, 1, 4, 2]) == 2
    assert lis_length([1, 3, 5, 2, 6, 8, 4, 7]) == 5
    assert lds_length(list(range(7, 0, -1))) == 7
    assert lds_length(Permutation.identity(6)) == 1
    assert lds_length([3, 1, 4, 2]) == 2
    assert lis_bruteforce([2, 1]) == 1
    assert lis_bruteforce([1, 2]) == 2


def test_bruteforce_size_limit():
    with pytest.raises(ValueError):
        lis_bruteforce(Permutation.identity(21))


def test_s6_exhaustive():
    for p in itertools.permutations(range(1, 7)):
        assert lis_length(p) == lis_bruteforce(p)
        assert lds_length(p) == lis_bruteforce(reversal(p))


@pytest.mark.parametrize("n", range(1, 8))
def test_erdos_szekeres_exhaustive(n):
    for p in itertools.permutations(range(1, n + 1)):
        assert lis_length(p) * lds_length(p) >= n


def test_erdos_szekeres_large_random():
    rng = np.random.default_rng(1)
    for _ in range(5):
        p = rng.permutation(10 ** 4) + 1
        assert lis_length(p) * lds_length(p) >= 10 ** 4
    for q in (0.3, 0.9):
        p = sample_mallows(10 ** 4, q, GeometricStream(q, 2, 0))
        assert lis_length(p) * lds_length(p) >= 10 ** 4


def test_random_small_against_bruteforce():
    rng = np.random.default_rng(2)
    for _ in range(10 ** 4):
        n = int(rng.integers(1, 21))
        p = rng.permutation(n) + 1
        assert lis_length(p) == lis_bruteforce(p)


@given(perms_st)
@settings(max_examples=300, deadline=None)
def test_lis_equals_lds_of_reversal(p):
    assert lis_length(p) == lds_length(reversal(p))


@given(perms_st)
@settings(max_examples=300, deadline=None)
def test_bounds_and_equality_cases(p):
    n = len(p)
    assert 1 <= lis_length(p) <= n
    assert (lis_length(p) == n) == (list(p) == list(range(1, n + 1)))
    if n > 1:
        assert (lis_length(p) == 1) == (list(p) == list(range(n, 0, -1)))


@given(perms_st)
@settings(max_examples=200, deadline=None)
def test_witness_is_increasing_and_longest(p):
    w = lis_witness(p)
    assert len(w) == lis_length(p)
    assert all(a < b for a, b in zip(w, w[1:]))
    idx = [list(p).index(v) for v in w]
    assert idx == sorted(idx)


def test_rows():
    perms = np.array([[1, 2, 3], [3, 2, 1], [2, 3, 1]])
    up, dn = lis_lds_rows(perms)
    assert up.tolist() == [3, 1, 2] and dn.tolist() == [1, 3, 2]
