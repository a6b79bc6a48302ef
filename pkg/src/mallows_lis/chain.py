"""Numerical and Monte Carlo analysis of the auxiliary chain M_t = max(M_{t-1}, Z_t) - 1.

Transition kernel: P(i, i-1) = 1 - q^i for i >= 1 and P(i, j) = q^j (1 - q) for
j >= i.  The stationary law is mu_j proportional to q^j / prod_{k<=j}(1 - q^k),
and its normaliser is the Euler function, so mu_0 = prod_{k>=1}(1 - q^k).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats as _st

from . import _kernels as K
from .regen import drive, sample_blocks
from .rng import STREAMS_CHAIN, GeometricStream, _check_q, make_generator

DEFAULT_EPS = 1e-12


@dataclass(frozen=True)
class TruncatedDistribution:
    """Weights on states 0..j_max, with an upper bound on the mass beyond j_max."""

    weights: np.ndarray
    j_max: int
    tail_mass_bound: float

    def __post_init__(self):
        if np.any(self.weights < 0):
            raise ValueError("negative weight")
        if self.weights.size != self.j_max + 1:
            raise ValueError("weights must cover states 0..j_max")

    @property
    def total(self) -> float:
        return math.fsum(self.weights.tolist())


def _cutoff(q: float, eps: float) -> int:
    """Smallest J with q^(J+1)/(1-q) < eps."""
    j = math.ceil(math.log(eps * (1 - q)) / math.log(q)) - 1
    return max(j, 0)


def transition_row(i: int, q: float, j_max: int) -> TruncatedDistribution:
    """Row i of the kernel on states 0..j_max; the dropped mass is q^(j_max+1)."""
    q = _check_q(q)
    if i < 0:
        raise ValueError("state must be >= 0")
    if j_max < i:
        raise ValueError("j_max must be >= i")
    w = np.zeros(j_max + 1)
    j = np.arange(i, j_max + 1)
    w[i:] = q ** j * (1 - q)
    if i >= 1:
        w[i - 1] = 1 - q ** i
    return TruncatedDistribution(w, j_max, q ** (j_max + 1))


def transition_matrix(q: float, j_max: int) -> np.ndarray:
    """Kernel restricted to states 0..j_max (rows lose q^(j_max+1) of mass)."""
    q = _check_q(q)
    j = np.arange(j_max + 1)
    P = np.triu(np.broadcast_to(q ** j * (1 - q), (j_max + 1, j_max + 1))).copy()
    P[j[1:], j[1:] - 1] = 1 - q ** j[1:]
    return P


def euler_mu0(q: float, eps: float = DEFAULT_EPS) -> float:
    """mu_0 = prod_{k>=1} (1 - q^k), truncated once sum_{k>K} q^k < eps."""
    q = _check_q(q)
    k_max = _cutoff(q, eps)
    k = np.arange(1, k_max + 1, dtype=np.float64)
    return math.exp(math.fsum(np.log1p(-q ** k).tolist()))


def stationary_dist(q: float, eps: float = DEFAULT_EPS) -> TruncatedDistribution:
    """mu_j = mu_0 q^j / prod_{k=1}^j (1 - q^k), j <= j_max.

    Since prod_{k<=j}(1 - q^k) >= mu_0 we have mu_j <= q^j, so the mass beyond
    j_max is at most q^(j_max+1)/(1-q) < eps.
    """
    q = _check_q(q)
    j_max = _cutoff(q, eps)
    mu = np.empty(j_max + 1)
    mu[0] = euler_mu0(q, eps)
    for j in range(j_max):
        mu[j + 1] = mu[j] * q / (1 - q ** (j + 1))
    return TruncatedDistribution(mu, j_max, q ** (j_max + 1) / (1 - q))


def stationarity_residual(q: float, eps: float = DEFAULT_EPS, mu: np.ndarray | None = None) -> float:
    """L1 norm of mu P - mu over the truncated state space.

    ``mu`` may be supplied (e.g. perturbed); otherwise :func:`stationary_dist` is used.
    """
    q = _check_q(q)
    if mu is None:
        mu = stationary_dist(q, eps).weights
    P = transition_matrix(q, mu.size - 1)
    return float(np.abs(mu @ P - mu).sum())


def first_passage_pmf(q: float, horizon: int, eps: float = DEFAULT_EPS):
    """P_0(R_0^+ = t) for t = 1..horizon.

    State 0 is made absorbing after the first step and the sub-probability
    vector is pushed through the truncated kernel.  Returns ``(pmf, bound)``
    where ``bound`` caps the total mass lost to truncation.
    """
    q = _check_q(q)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    j_max = _cutoff(q, eps / horizon)
    P = transition_matrix(q, j_max)
    v = P[0].copy()
    pmf = np.empty(horizon)
    pmf[0] = v[0]
    v[0] = 0.0
    for t in range(1, horizon):
        v = v @ P
        pmf[t] = v[0]
        v[0] = 0.0
    bound = horizon * q ** (j_max + 1)
    return pmf, bound


# --------------------------------------------------------------------------
# Monte Carlo

def passage_times(stream: GeometricStream, starts, level: int = 0, plus: bool = True) -> np.ndarray:
    """Steps until the chain from each start is at or below ``level``.

    ``plus=True`` gives return-type times (k >= 1); ``plus=False`` gives
    hitting times, 0 when a start is already at or below ``level``.
    """
    starts = np.ascontiguousarray(np.atleast_1d(starts), dtype=np.int64)
    out = np.empty(starts.size, dtype=np.int64)
    per_item = 4.0 + float(np.mean(starts)) * 2 if starts.size else 1.0
    drive(stream, lambda z, first: K.passage_kernel(z, starts, level, plus, out, first),
          starts.size, per_item)
    return out


def sample_stationary(q: float, size: int, gen: np.random.Generator,
                      eps: float = DEFAULT_EPS) -> np.ndarray:
    """States drawn from the truncated stationary law by inverse CDF."""
    mu = stationary_dist(q, eps).weights
    cdf = np.cumsum(mu)
    cdf /= cdf[-1]
    return np.searchsorted(cdf, gen.random(size), side="right").astype(np.int64)


def _mean_se(a: np.ndarray) -> tuple:
    a = np.asarray(a, dtype=np.float64)
    return float(a.mean()), float(a.std(ddof=1) / math.sqrt(a.size))


def report(quantity: str, estimate: float, std_error, n_samples: int,
           truncation_bound, seed) -> dict:
    return {"quantity": quantity, "estimate": float(estimate),
            "std_error": None if std_error is None else float(std_error),
            "n_samples": int(n_samples),
            "truncation_bound": None if truncation_bound is None else float(truncation_bound),
            "seed": seed}


def kac_check(q: float, blocks: int, seed: int, stream_id: int = STREAMS_CHAIN,
              samples_rhs: int | None = None, eps: float = DEFAULT_EPS) -> dict:
    """Compare E_0 (R_0^+)^2 with (2 E_mu R_0 + 1) / mu_0, both sides by Monte Carlo.

    Left: ``blocks`` return times from 0 on stream ``stream_id``.  Right:
    starts drawn from the truncated stationary law (stream ``stream_id + 1``)
    and hitting times of 0 on stream ``stream_id + 2``.
    """
    q = _check_q(q)
    if blocks < 10 ** 4:
        raise ValueError("need at least 10^4 blocks")
    samples_rhs = samples_rhs or blocks
    ret = sample_blocks(q, GeometricStream(q, seed, stream_id), blocks).x.astype(np.float64)
    lhs, lhs_se = _mean_se(ret * ret)
    starts = sample_stationary(q, samples_rhs, make_generator(seed, stream_id + 1), eps)
    hit = passage_times(GeometricStream(q, seed, stream_id + 2), starts, 0, plus=False)
    mean_hit, hit_se = _mean_se(hit)
    mu0 = euler_mu0(q, eps)
    rhs = (2 * mean_hit + 1) / mu0
    rhs_se = 2 * hit_se / mu0
    comb = math.hypot(lhs_se, rhs_se)
    return {
        "q": q, "seed": seed, "stream_id": stream_id,
        "lhs": report("E0[(R0+)^2]", lhs, lhs_se, blocks, None, seed),
        "rhs": report("(2 E_mu R0 + 1)/mu0", rhs, rhs_se, samples_rhs, eps, seed),
        "mean_hitting_time": report("E_mu R0", mean_hit, hit_se, samples_rhs, eps, seed),
        "z_score": (lhs - rhs) / comb if comb > 0 else 0.0,
    }


def descent_times(q: float, states: Sequence[int], reps: int, seed: int,
                  stream_id: int = STREAMS_CHAIN + 16) -> list:
    """Estimates of E_i R_{i-1} (time to step from i down to i-1) per state i."""
    out = []
    for k, i in enumerate(states):
        starts = np.full(reps, i, dtype=np.int64)
        t = passage_times(GeometricStream(q, seed, stream_id + k), starts, i - 1, plus=False)
        m, se = _mean_se(t)
        out.append({"state": int(i), "mean": m, "std_error": se, "n_samples": reps})
    return out


def passage_tail(q: float, start: int, level: int, m_grid: Sequence[int], reps: int,
                 seed: int, stream_id: int) -> list:
    """P_start[first time at or below ``level`` (k >= 1) > m] for each m."""
    t = passage_times(GeometricStream(q, seed, stream_id), np.full(reps, start), level, plus=True)
    out = []
    for m in m_grid:
        p = float(np.count_nonzero(t > m)) / reps
        out.append((int(m), p, math.sqrt(p * (1 - p) / reps)))
    return out


def return_tail_probe(q: float, t: int, s_grid: Sequence[int], reps: int, seed: int,
                      stream_id: int = STREAMS_CHAIN + 32) -> dict:
    """Tail P_t[R_0^+ > 10 t + s] over ``s_grid`` and a log-linear decay fit.

    The fit regresses log P against s over grid points with positive
    estimates; ``slope_upper_95`` is the one-sided 95% upper confidence bound.
    """
    q = _check_q(q)
    tails = passage_tail(q, t, 0, [10 * t + s for s in s_grid], reps, seed, stream_id)
    points = [(s, p, se) for s, (_, p, se) in zip(s_grid, tails)]
    s_ok = np.array([s for s, p, _ in points if p > 0], dtype=np.float64)
    lp = np.log([p for _, p, _ in points if p > 0])
    fit = {"slope": None, "slope_se": None, "slope_upper_95": None, "n_points": int(s_ok.size)}
    if s_ok.size >= 3:
        lr = _st.linregress(s_ok, lp)
        upper = lr.slope + _st.t.ppf(0.95, s_ok.size - 2) * lr.stderr
        fit.update(slope=float(lr.slope), slope_se=float(lr.stderr),
                   intercept=float(lr.intercept), slope_upper_95=float(upper))
    return {"q": q, "start": int(t), "reps": int(reps), "seed": seed, "stream_id": stream_id,
            "tail": [{"s": int(s), "p": p, "std_error": se} for s, p, se in points],
            "fit": fit}


def coupled_chains(m1: int, m2: int, z: Sequence[int]) -> tuple:
    """Trajectories of M from m1 driven by z and of M' from m2 driven by z[1:]."""
    z = np.asarray(z, dtype=np.int64)
    a = np.empty(z.size, dtype=np.int64)
    b = np.empty(z.size - 1, dtype=np.int64)
    K.trajectory_kernel(z, m1, a)
    K.trajectory_kernel(np.ascontiguousarray(z[1:]), m2, b)
    return np.concatenate([[m1], a]), np.concatenate([[m2], b])
