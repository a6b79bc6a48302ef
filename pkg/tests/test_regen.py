import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mallows_lis.chain import euler_mu0, first_passage_pmf
from mallows_lis.monotone import lds_length, lis_length
from mallows_lis.perm import MallowsParams, Permutation, assign_positions
from mallows_lis.regen import (Block, BlockBatch, ChainState, block_batch, chain_step,
                               chain_trajectory, decompose_prefix, decompose_stats,
                               regeneration_times, sample_block, sample_blocks)
from mallows_lis.rng import GeometricStream

z_st = st.lists(st.integers(1, 10), min_size=1, max_size=200)


def test_chain_step_examples():
    assert chain_step(ChainState(0), 4) == ChainState(3)
    assert chain_step(ChainState(3), 1) == ChainState(2)
    assert chain_step(2, 2).value == 1
    with pytest.raises(ValueError):
        ChainState(-1)
    with pytest.raises(ValueError):
        chain_step(0, 0)


def test_trajectory_examples():
    assert chain_trajectory([1, 2, 3, 1, 2, 3, 1, 1]).tolist() == [0, 1, 2, 1, 1, 2, 1, 0]
    assert chain_trajectory(np.ones(30, dtype=int)).tolist() == [0] * 30
    assert chain_trajectory([1, 1], ChainState(3)).tolist() == [2, 1]


def test_regeneration_examples():
    assert regeneration_times([1, 2, 3, 1, 2, 3, 1, 1]).tolist() == [1, 8]
    assert regeneration_times([1, 1, 1]).tolist() == [1, 2, 3]
    assert regeneration_times([2, 1]).tolist() == [2]


@given(z_st)
@settings(max_examples=300, deadline=None)
def test_coupling_identity(z):
    traj = chain_trajectory(z)
    pos = assign_positions(z).positions
    t = np.arange(1, len(z) + 1)
    assert np.array_equal(traj, np.maximum.accumulate(pos) - t)
    # one step at a time through chain_step as well
    m = ChainState(0)
    for k, zk in enumerate(z):
        m = chain_step(m, zk)
        assert m.value == traj[k]


@given(z_st)
@settings(max_examples=200, deadline=None)
def test_regeneration_iff_zero(z):
    traj = chain_trajectory(z)
    regen = set(regeneration_times(z).tolist())
    pos = assign_positions(z).positions
    for t in range(1, len(z) + 1):
        closed = set(pos[:t].tolist()) == set(range(1, t + 1))
        assert (t in regen) == (traj[t - 1] == 0) == closed


def test_block_small_cases():
    s = GeometricStream(0.5, 31, 0)
    blocks = [sample_block(0.5, s) for _ in range(20000)]
    for b in blocks:
        assert b.is_indecomposable()
        assert b.y == lis_length(b.sigma) and b.y_down == lds_length(b.sigma)
        if b.x == 1:
            assert b.sigma.to_tuple() == (1,) and b.y == b.y_down == 1
        if b.x == 2:
            assert b.sigma.to_tuple() == (2, 1)
    x = np.array([b.x for b in blocks])
    for j, p in [(1, 0.5), (2, 0.5 * 0.25), (3, 0.078125)]:
        assert abs(np.mean(x == j) - p) < 3 * math.sqrt(p * (1 - p) / x.size)


def test_block_validation():
    with pytest.raises(ValueError):
        Block(Permutation([2, 1]), 3, 1, 2)


def test_streaming_blocks_equal_materialised_blocks():
    q = 0.6
    s1, s2 = GeometricStream(q, 77, 4), GeometricStream(q, 77, 4)
    bb = sample_blocks(q, s1, 3000)
    ref = [sample_block(q, s2) for _ in range(3000)]
    assert bb.x.tolist() == [b.x for b in ref]
    assert bb.y.tolist() == [b.y for b in ref]
    assert bb.y_down.tolist() == [b.y_down for b in ref]
    assert s1.position == s2.position == sum(b.x for b in ref)


def test_block_batch_independent_of_workers():
    a = block_batch(0.5, 300_000, 5, workers=1)
    b = block_batch(0.5, 300_000, 5, workers=3)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y_down, b.y_down)
    assert a.stream_ids == b.stream_ids == (0, 1, 2)


def test_block_length_pmf_matches_first_passage():
    q = 0.5
    bb = block_batch(q, 10 ** 6, 9)
    pmf, _ = first_passage_pmf(q, 8)
    for j in range(1, 9):
        p = pmf[j - 1]
        f = np.mean(bb.x == j)
        assert abs(f - p) < 3 * math.sqrt(p * (1 - p) / len(bb)), j


def test_block_mean_and_autocorrelation():
    bb = block_batch(0.5, 10 ** 6, 10)
    x = bb.x.astype(float)
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(x.mean() - 1 / euler_mu0(0.5)) < 3 * se
    c = x - x.mean()
    r1 = float(c[:-1] @ c[1:] / (c @ c))
    assert abs(r1) < 4 / math.sqrt(x.size)


def test_batch_summary_and_csv(tmp_path):
    bb = block_batch(0.5, 1000, 1)
    s = bb.summary()
    assert s["count"] == 1000
    assert math.isclose(s["mu0_hat"], 1 / s["mean_x"])
    path = tmp_path / "b.csv"
    bb.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,y_down" and len(lines) == 1001
    assert lines[1] == f"{bb.x[0]},{bb.y[0]},{bb.y_down[0]}"
    cat = BlockBatch.concat([bb, bb])
    assert len(cat) == 2000


@pytest.mark.parametrize("n", [1, 2, 7, 50, 400])
def test_decompose_prefix_structure(n):
    q = 0.5
    s = GeometricStream(q, 3, n)
    for _ in range(30):
        start = s.position
        dec, pi_n = decompose_prefix(n, q, s)
        t = dec.t
        assert t[0] == 0 and list(t) == sorted(set(t))
        assert [t[j] - t[j - 1] for j in range(1, len(t))] == [b.x for b in dec.blocks]
        assert t[-2] < n <= t[-1] and dec.s_n == len(dec.blocks)
        assert s.position - start == t[-1]
        assert dec.q_n == sum(b.y for b in dec.blocks)
        L = lis_length(pi_n)
        assert dec.q_n - dec.blocks[-1].y < L <= dec.q_n
        Ld = lds_length(pi_n)
        before = max([b.y_down for b in dec.blocks[:-1]], default=0)
        assert before <= Ld <= max(b.y_down for b in dec.blocks)


def test_reassembly_reproduces_prefix():
    q = 0.7
    s = GeometricStream(q, 4, 0)
    ref = GeometricStream(q, 4, 0)
    dec, _ = decompose_prefix(300, q, s)
    z = ref.take(dec.t[-1])
    assert np.array_equal(dec.reassemble(), assign_positions(z).positions)


def test_decomposition_blocks_equal_sample_block():
    q = 0.5
    dec, _ = decompose_prefix(200, q, GeometricStream(q, 6, 1))
    s = GeometricStream(q, 6, 1)
    assert [sample_block(q, s) for _ in dec.blocks] == list(dec.blocks)


def test_decompose_stats_matches_decompose_prefix():
    q, n = 0.5, 500
    stats = decompose_stats(n, q, GeometricStream(q, 12, 0), count=40)
    s = GeometricStream(q, 12, 0)
    for r in range(40):
        dec, pi_n = decompose_prefix(n, q, s)
        assert stats["t_end"][r] == dec.t[-1]
        assert stats["s_n"][r] == dec.s_n and stats["q_n"][r] == dec.q_n
        assert stats["y_last"][r] == dec.blocks[-1].y
        assert stats["max_y"][r] == max(dec.y)
        assert stats["max_y_down"][r] == max(dec.y_down)
        assert stats["max_y_down_before_last"][r] == max(dec.y_down[:-1], default=0)
        assert stats["lis"][r] == lis_length(pi_n) and stats["lds"][r] == lds_length(pi_n)


def test_x3_block_permutations_both_occur():
    # (3,2,1) and (3,1,2) are the only indecomposable length-3 blocks besides (2,3,1)
    s = GeometricStream(0.5, 21, 0)
    seen = {}
    for _ in range(20000):
        b = sample_block(0.5, s)
        if b.x == 3:
            seen[b.sigma.to_tuple()] = seen.get(b.sigma.to_tuple(), 0) + 1
    assert seen.get((3, 2, 1), 0) > 0 and seen.get((3, 1, 2), 0) > 0
    assert set(seen) <= {(3, 2, 1), (3, 1, 2), (2, 3, 1)}


def test_params_mismatch_rejected():
    with pytest.raises(ValueError):
        sample_blocks(MallowsParams(0.5), GeometricStream(0.4, 1, 0), 10)
