import math

import numpy as np
import pytest

from mallows_lis.chain import (coupled_chains, descent_times, euler_mu0, first_passage_pmf,
                               kac_check, passage_tail, passage_times, return_tail_probe,
                               sample_stationary, stationarity_residual, stationary_dist,
                               TruncatedDistribution, transition_matrix, transition_row)
from mallows_lis.regen import chain_trajectory
from mallows_lis.rng import GeometricStream, make_generator

MU0_HALF = 0.2887880950868651


def test_rows_examples():
    r0 = transition_row(0, 0.5, 10).weights
    assert r0[:3].tolist() == [0.5, 0.25, 0.125]
    assert transition_row(2, 0.5, 10).weights[1] == 0.75
    assert transition_row(2, 0.5, 10).weights[0] == 0.0


@pytest.mark.parametrize("q", [0.2, 0.5, 0.9])
def test_rows_sum_to_one_within_bound(q):
    for i in range(51):
        r = transition_row(i, q, 60)
        assert 1 - r.tail_mass_bound - 1e-14 <= r.total <= 1 + 1e-14
        assert abs(1 - r.total - r.tail_mass_bound) < 1e-13


def test_matrix_equals_rows():
    P = transition_matrix(0.4, 20)
    for i in range(21):
        assert np.array_equal(P[i], transition_row(i, 0.4, 20).weights)


def test_truncated_distribution_validation():
    with pytest.raises(ValueError):
        TruncatedDistribution(np.array([0.5, -0.1]), 1, 0.0)
    with pytest.raises(ValueError):
        TruncatedDistribution(np.array([0.5]), 1, 0.0)


def test_euler_product():
    assert abs(euler_mu0(0.5) - MU0_HALF) < 1e-15
    assert abs(euler_mu0(0.5) - 0.288788095) < 1e-9
    assert euler_mu0(0.001) > 0.998


@pytest.mark.parametrize("q", [0.3, 0.5, 0.8])
def test_stationary(q):
    mu = stationary_dist(q)
    w = mu.weights
    assert 1 - mu.tail_mass_bound <= mu.total <= 1 + 1e-12
    assert mu.tail_mass_bound < 1e-12
    j = np.arange(w.size - 1)
    assert np.max(np.abs(w[1:] * (1 - q ** (j + 1)) - q * w[:-1])) < 1e-13
    assert np.all(w <= q ** np.arange(w.size) + 1e-16)
    assert stationarity_residual(q, 1e-12) < 1e-10


def test_stationary_examples_half():
    w = stationary_dist(0.5).weights
    assert math.isclose(w[1], MU0_HALF, rel_tol=1e-14)
    assert math.isclose(w[2], 2 / 3 * MU0_HALF, rel_tol=1e-14)
    assert abs(w[2] - 0.192525) < 1e-6
    # column 0 of mu P = mu
    assert abs(w[0] * 0.5 + w[1] * 0.5 - w[0]) < 1e-14


def test_residual_detects_perturbation():
    w = stationary_dist(0.5).weights.copy()
    w[1] += 1e-3
    assert stationarity_residual(0.5, mu=w) > 1e-4


def test_first_passage_closed_forms():
    for q in (0.2, 0.5, 0.7):
        pmf, bound = first_passage_pmf(q, 10)
        assert math.isclose(pmf[0], 1 - q, rel_tol=1e-13)
        assert math.isclose(pmf[1], q * (1 - q) ** 2, rel_tol=1e-12)
        assert math.isclose(pmf[2], q ** 2 * (1 - q) ** 3 * (2 + q), rel_tol=1e-12)
        assert bound < 1e-11
    assert first_passage_pmf(0.5, 3)[0][2] == pytest.approx(0.078125, abs=1e-13)


def test_first_passage_mass_and_mean():
    q = 0.5
    prev = None
    for T in (20, 80, 320):
        pmf, bound = first_passage_pmf(q, T)
        assert math.fsum(pmf.tolist()) <= 1 + 1e-12
        mean = math.fsum((np.arange(1, T + 1) * pmf).tolist())
        gap = 1 / MU0_HALF - mean
        assert gap > -T * bound - 1e-12
        if prev is not None:
            assert gap < prev
        prev = gap
    assert abs(prev) < 1e-9


def test_passage_times_small():
    s = GeometricStream(0.5, 1, 0)
    t = passage_times(s, [0, 3, 0], 0, plus=False)
    assert t[0] == 0 and t[2] == 0 and t[1] >= 3
    t = passage_times(GeometricStream(0.5, 1, 0), np.zeros(1000, dtype=int), 0, plus=True)
    assert t.min() >= 1


def test_passage_times_agree_with_trajectory():
    s = GeometricStream(0.5, 2, 0)
    z = GeometricStream(0.5, 2, 0).take(5000)
    t = passage_times(s, [4, 2], 0, plus=False)
    traj = chain_trajectory(z, 4)
    assert t[0] == np.flatnonzero(traj == 0)[0] + 1
    traj2 = chain_trajectory(z[t[0]:], 2)
    assert t[1] == np.flatnonzero(traj2 == 0)[0] + 1


def test_sample_stationary_matches_mu():
    q = 0.5
    x = sample_stationary(q, 200_000, make_generator(1, 0))
    w = stationary_dist(q).weights
    for j in range(4):
        assert abs(np.mean(x == j) - w[j]) < 4 * math.sqrt(w[j] * (1 - w[j]) / x.size)


@pytest.mark.slow
def test_kac_identity_half():
    res = kac_check(0.5, 10 ** 6, 20160524)
    assert abs(res["z_score"]) < 3
    for key in ("lhs", "rhs", "mean_hitting_time"):
        assert set(res[key]) == {"quantity", "estimate", "std_error", "n_samples",
                                 "truncation_bound", "seed"}


def test_kac_small_q():
    res = kac_check(0.01, 10 ** 5, 3)
    assert abs(res["lhs"]["estimate"] - 1) < 0.05
    assert abs(res["lhs"]["estimate"] / res["rhs"]["estimate"] - 1) < 0.01


def test_kac_requires_enough_blocks():
    with pytest.raises(ValueError):
        kac_check(0.5, 100, 1)


def test_descent_times_monotone():
    rows = descent_times(0.5, range(1, 7), 200_000, 5)
    for a, b in zip(rows, rows[1:]):
        assert a["mean"] >= b["mean"] - 3 * math.hypot(a["std_error"], b["std_error"])


def test_return_tail_monotone_and_decay():
    res = return_tail_probe(0.5, 0, [10, 20], 200_000, 2)
    p10, p20 = (r["p"] for r in res["tail"])
    assert p20 < p10
    res = return_tail_probe(0.5, 0, range(5, 41, 5), 10 ** 6, 3)
    assert res["fit"]["slope_upper_95"] < 0


def test_coupled_start_domination():
    q, reps = 0.5, 200_000
    m_grid = [5, 10, 20, 40]
    # P_{t+v}[R_v^+ > m] <= P_t[R_0^+ > m]
    a = passage_tail(q, 5, 2, m_grid, reps, 7, 0)
    b = passage_tail(q, 3, 0, m_grid, reps, 7, 1)
    for (_, pa, sa), (_, pb, sb) in zip(a, b):
        assert pa <= pb + 3 * math.hypot(sa, sb)


def test_one_step_coupling():
    rng = np.random.default_rng(3)
    for _ in range(10 ** 4):
        m1 = int(rng.integers(0, 20))
        m2 = int(rng.integers(m1, 25))
        z = rng.geometric(0.5, 1001)
        z[0] = int(rng.integers(1, m1 + 1)) if m1 >= 1 else 1
        if z[0] > m1:
            continue
        a, b = coupled_chains(m1, m2, z)
        # M'_t >= M_{t+1} for t = 0..1000
        assert np.all(b >= a[1:])
