"""Renewal-reward estimation of the CLT constants and the limit-theorem experiments."""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special as _sp

from .chain import euler_mu0
from .config import default_thresholds
from .monotone import lds_length, lis_length
from .perm import MallowsParams, sample_mallows
from .regen import block_batch, decompose_stats
from .rng import (DEFAULT_SEED, STREAMS_BLOCKS, STREAMS_CLT, STREAMS_CONSTANTS, STREAMS_LDS,
                  STREAMS_VARIANCE, GeometricStream, _check_q, default_workers)


class DegenerateEstimateError(ValueError):
    """Residual variance of Y - aX is zero; the CLT scale is undefined."""


# --------------------------------------------------------------------------
# verification metrics

def normal_cdf(x):
    """Standard normal CDF through the complementary error function."""
    if isinstance(x, np.ndarray):
        return 0.5 * _sp.erfc(-x / math.sqrt(2.0))
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def ks_statistic(sample, cdf: Callable = normal_cdf) -> float:
    """sup_x |F_N(x) - F(x)|, evaluated at the order statistics."""
    x = np.sort(np.asarray(sample, dtype=np.float64))
    if x.size == 0:
        raise ValueError("empty sample")
    F = np.array([cdf(float(v)) for v in x])
    i = np.arange(1, x.size + 1)
    return float(max(np.max(i / x.size - F), np.max(F - (i - 1) / x.size)))


def summarize(sample) -> dict:
    a = np.asarray(sample, dtype=np.float64)
    mean = float(a.mean())
    var = float(a.var(ddof=1)) if a.size > 1 else 0.0
    if a.size > 2 and var > 0:
        c = a - mean
        skew = float(np.mean(c ** 3) / np.mean(c ** 2) ** 1.5)
    else:
        skew = 0.0
    return {"n": int(a.size), "mean": mean, "variance": var, "skewness": skew}


# --------------------------------------------------------------------------
# constants

@dataclass
class CltConstants:
    """Estimates of a, eta, sigma = sqrt(mu0) eta and mu0 from i.i.d. blocks."""

    a_hat: float
    eta_hat: float
    sigma_hat: float
    mu0_hat: float
    std_errors: dict
    jackknife_std_errors: dict
    n_blocks: int
    q: float | None = None
    seed: int | None = None
    stream_ids: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CltConstants":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _functionals(m: np.ndarray) -> np.ndarray:
    """(a, eta^2, mu0, sigma) from moment rows (E X, E Y, E X^2, E XY, E Y^2)."""
    mx, my, mxx, mxy, myy = m.T
    a = my / mx
    eta2 = myy - 2 * a * mxy + a * a * mxx
    return np.stack([a, eta2, 1 / mx, np.sqrt(np.maximum(eta2, 0) / mx)], axis=-1)


def _gradients(m: np.ndarray) -> np.ndarray:
    mx, my, mxx, mxy, myy = m
    a = my / mx
    eta2 = myy - 2 * a * mxy + a * a * mxx
    g_a = np.array([-my / mx ** 2, 1 / mx, 0, 0, 0])
    g_eta2 = np.array([2 * my * mxy / mx ** 2 - 2 * my ** 2 * mxx / mx ** 3,
                       -2 * mxy / mx + 2 * my * mxx / mx ** 2,
                       a * a, -2 * a, 1.0])
    g_mu0 = np.array([-1 / mx ** 2, 0, 0, 0, 0])
    sigma = math.sqrt(eta2 / mx)
    g_sigma = (g_eta2 / mx - eta2 / mx ** 2 * np.array([1.0, 0, 0, 0, 0])) / (2 * sigma)
    return np.stack([g_a, g_eta2, g_mu0, g_sigma])


_JACKKNIFE_GROUPS = 100_000


def constants_from_blocks(x, y, *, q=None, seed=None, stream_ids=()) -> CltConstants:
    """Ratio estimator a = Ybar / Xbar, eta^2 = sum (Y - aX)^2 / (B - 1),
    mu0 = 1 / Xbar, sigma = sqrt(mu0) eta.

    Standard errors come from the delta method on the five moments
    (X, Y, X^2, XY, Y^2); a grouped jackknife (delete-one up to 10^5 blocks)
    is reported alongside.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    B = x.size
    if B < 2 or y.size != B:
        raise ValueError("need at least two blocks with matching x and y")
    a = y.mean() / x.mean()
    resid = y - a * x
    eta2 = float(resid @ resid) / (B - 1)
    if eta2 <= 1e-12 * float(np.mean(y * y)):
        raise DegenerateEstimateError(f"eta^2 estimate is {eta2!r}; blocks are degenerate")
    mu0 = 1.0 / x.mean()
    eta = math.sqrt(eta2)
    sigma = math.sqrt(mu0) * eta

    feats = np.stack([x, y, x * x, x * y, y * y], axis=1)
    m = feats.mean(axis=0)
    cov = np.cov(feats, rowvar=False)
    G = _gradients(m)
    se = np.sqrt(np.einsum("ij,jk,ik->i", G, cov, G) / B)
    std_errors = {"a": float(se[0]), "eta2": float(se[1]), "eta": float(se[1] / (2 * eta)),
                  "mu0": float(se[2]), "sigma": float(se[3])}

    groups = min(B, _JACKKNIFE_GROUPS)
    edges = np.linspace(0, B, groups + 1).astype(np.int64)
    gsum = np.add.reduceat(feats, edges[:-1], axis=0)
    gcount = np.diff(edges).astype(np.float64)
    loo = (feats.sum(axis=0) - gsum) / (B - gcount)[:, None]
    theta = _functionals(loo)
    jk = np.sqrt((groups - 1) / groups * ((theta - theta.mean(axis=0)) ** 2).sum(axis=0))
    jack = {"a": float(jk[0]), "eta2": float(jk[1]), "eta": float(jk[1] / (2 * eta)),
            "mu0": float(jk[2]), "sigma": float(jk[3])}
    return CltConstants(float(a), eta, sigma, float(mu0), std_errors, jack, int(B),
                        q, seed, [int(s) for s in stream_ids])


def estimate_constants(q: float, n_blocks: int, seed: int = DEFAULT_SEED,
                       stream_base: int = STREAMS_CONSTANTS,
                       workers: int | None = None) -> CltConstants:
    """Constants from ``n_blocks`` i.i.d. blocks sampled on streams starting at
    ``stream_base`` (fixed shards, so independent of ``workers``)."""
    q = _check_q(q)
    if n_blocks < 10 ** 3:
        raise ValueError("need at least 10^3 blocks")
    bb = block_batch(q, n_blocks, seed, stream_base, workers)
    return constants_from_blocks(bb.x, bb.y, q=q, seed=seed, stream_ids=bb.stream_ids)


# --------------------------------------------------------------------------
# experiments

@dataclass
class ExperimentReport:
    kind: str
    config: dict
    summary: dict
    ks_statistic: float | None
    passes: dict
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def passed(self) -> bool:
        return all(self.passes.values())


def _fan_out(fn: Callable, items: Sequence, workers: int | None) -> list:
    workers = workers or default_workers()
    if workers == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(workers) as ex:
        return list(ex.map(fn, items))


def standardized_report(z, config: dict, thresholds: dict | None = None,
                        kind: str = "clt", extra: dict | None = None) -> ExperimentReport:
    """KS distance to N(0, 1) plus moments of a standardized sample, checked
    against ``thresholds`` (ks_max, mean_abs_max, var_min, var_max); by
    default those of the packaged CLT config."""
    thresholds = dict(default_thresholds("clt") if thresholds is None else thresholds)
    summ = summarize(z)
    ks = ks_statistic(z, normal_cdf)
    passes = {}
    if "ks_max" in thresholds:
        passes["ks"] = ks < thresholds["ks_max"]
    if "mean_abs_max" in thresholds:
        passes["mean"] = abs(summ["mean"]) < thresholds["mean_abs_max"]
    if "var_min" in thresholds and "var_max" in thresholds:
        passes["variance"] = thresholds["var_min"] < summ["variance"] < thresholds["var_max"]
    return ExperimentReport(kind, dict(config, thresholds=thresholds), summ, ks, passes,
                            extra or {})


def _streams_overlap(a: Sequence[int], lo: int, hi: int) -> bool:
    return any(lo <= s < hi for s in a)


def clt_experiment(q: float, n: int, reps: int, constants: CltConstants,
                   seed: int = DEFAULT_SEED, stream_base: int = STREAMS_CLT,
                   thresholds: dict | None = None, workers: int | None = None):
    """Sample (L_n - a n) / (sigma sqrt n) over ``reps`` replicate streams.

    Replicate r runs on stream ``stream_base + r`` and is cut at its
    regeneration times, which also yields Q_n and the largest block LIS.
    Returns ``(report, standardized_samples)``.
    """
    q = _check_q(q)
    if n < 10 ** 3 or reps < 200:
        raise ValueError("need n >= 10^3 and reps >= 200")
    if constants.q is not None and not math.isclose(constants.q, q):
        raise ValueError(f"constants were estimated at q={constants.q}, not {q}")
    if constants.seed == seed and _streams_overlap(constants.stream_ids, stream_base, stream_base + reps):
        raise ValueError("constants and experiment share random streams")
    params = MallowsParams(q)

    def one(r):
        d = decompose_stats(n, params, GeometricStream(params, seed, stream_base + r))
        return d["lis"][0], d["q_n"][0], d["max_y"][0]

    rows = np.array(_fan_out(one, range(reps), workers), dtype=np.float64)
    lis, q_n, max_y = rows.T
    scale = constants.sigma_hat * math.sqrt(n)
    z = (lis - constants.a_hat * n) / scale
    config = {"q": q, "n": n, "reps": reps, "seed": seed,
              "stream_first": stream_base, "stream_last": stream_base + reps - 1,
              "constants": {"a_hat": constants.a_hat, "sigma_hat": constants.sigma_hat,
                            "n_blocks": constants.n_blocks, "seed": constants.seed}}
    extra = {
        "mean_lis": float(lis.mean()),
        "max_gap_q_minus_l_over_sqrt_n": float(np.max(q_n - lis) / math.sqrt(n)),
        "max_block_lis_over_sqrt_n": float(np.max(max_y) / math.sqrt(n)),
        "sandwich_violations": int(np.count_nonzero((lis > q_n))),
    }
    return standardized_report(z, config, thresholds, "clt", extra), z


def _lis_samples(q: float, n: int, reps: int, seed: int, stream_base: int,
                 workers: int | None, stat: Callable = lis_length) -> np.ndarray:
    params = MallowsParams(q)

    def one(r):
        return stat(sample_mallows(n, params, GeometricStream(params, seed, stream_base + r)))

    return np.array(_fan_out(one, range(reps), workers), dtype=np.float64)


def variance_growth_probe(q: float, n_grid: Sequence[int], reps: int,
                          seed: int = DEFAULT_SEED, stream_base: int = STREAMS_VARIANCE,
                          workers: int | None = None) -> dict:
    """Sample variances of L_n over ``n_grid`` and a weighted fit Var = slope * n.

    Each grid point uses its own block of ``reps`` streams.  The weight of a
    point is the inverse squared standard error of its sample variance
    (fourth-moment formula).
    """
    q = _check_q(q)
    if reps < 500:
        raise ValueError("need reps >= 500 per grid point")
    points = []
    for k, n in enumerate(n_grid):
        L = _lis_samples(q, int(n), reps, seed, stream_base + k * reps, workers)
        v = float(L.var(ddof=1))
        c = L - L.mean()
        m4 = float(np.mean(c ** 4))
        se = math.sqrt(max(m4 - v * v, 0.0) / reps)
        points.append({"n": int(n), "variance": v, "std_error": se, "mean": float(L.mean())})
    usable = [p for p in points if p["std_error"] > 0]
    fit = {"slope": None, "slope_se": None}
    if usable:
        n_arr = np.array([p["n"] for p in usable], dtype=np.float64)
        v_arr = np.array([p["variance"] for p in usable])
        w = 1.0 / np.array([p["std_error"] for p in usable]) ** 2
        denom = float(np.sum(w * n_arr ** 2))
        fit = {"slope": float(np.sum(w * n_arr * v_arr) / denom), "slope_se": math.sqrt(1.0 / denom)}
    return {"q": q, "reps": reps, "seed": seed, "points": points, "fit": fit}


def lds_scale(n: int, q: float) -> float:
    """sqrt(2 log n / log(1/q)), the predicted first-order size of L_n-down."""
    return math.sqrt(2 * math.log(n) / math.log(1 / q))


def lds_lln_experiment(q: float, n: int, reps: int, seed: int = DEFAULT_SEED,
                       stream_base: int = STREAMS_LDS, thresholds: dict | None = None,
                       workers: int | None = None) -> ExperimentReport:
    """Ratio L_n-down * sqrt(log 1/q) / sqrt(2 log n) over ``reps`` replicates."""
    q = _check_q(q)
    if n < 2:
        raise ValueError("need n >= 2")
    thresholds = dict(default_thresholds("lds") if thresholds is None else thresholds)
    L = _lis_samples(q, n, reps, seed, stream_base, workers, lds_length)
    ratio = L / lds_scale(n, q)
    summ = summarize(ratio)
    se = math.sqrt(summ["variance"] / reps) if reps > 1 else 0.0
    passes = {"ratio_band": thresholds["ratio_min"] <= summ["mean"] <= thresholds["ratio_max"]}
    config = {"q": q, "n": n, "reps": reps, "seed": seed, "stream_first": stream_base,
              "stream_last": stream_base + reps - 1, "thresholds": thresholds}
    extra = {"mean_lds": float(L.mean()), "ratio_std_error": se, "scale": lds_scale(n, q),
             "lds_values": L.astype(int).tolist()}
    return ExperimentReport("lds", config, summ, None, passes, extra)


def lds_trend(q: float, n_grid: Sequence[int], reps: int, seed: int = DEFAULT_SEED,
              stream_base: int = STREAMS_LDS, thresholds: dict | None = None,
              workers: int | None = None, n_se: float = 3.0) -> dict:
    """LDS ratio over increasing n.  ``toward_one`` holds when |mean - 1| does
    not grow from one grid point to the next by more than ``n_se`` combined
    standard errors."""
    reports = [lds_lln_experiment(q, n, reps, seed, stream_base + k * reps, thresholds, workers)
               for k, n in enumerate(n_grid)]
    dist = [abs(r.summary["mean"] - 1) for r in reports]
    ses = [r.extra["ratio_std_error"] for r in reports]
    steps = [dist[k + 1] <= dist[k] + n_se * math.hypot(ses[k], ses[k + 1])
             for k in range(len(reports) - 1)]
    return {"reports": reports, "distance_to_one": dist, "std_errors": ses,
            "toward_one": all(steps), "in_band": all(r.passed for r in reports)}


def block_lds_tail(q: float, k_grid: Sequence[int], blocks: int, seed: int = DEFAULT_SEED,
                   stream_base: int = STREAMS_BLOCKS, workers: int | None = None,
                   n_se: float = 3.0) -> dict:
    """Tail of the block LDS, P(Y-down >= k), against the exact lower bound
    (1 - q)^k q^(k(k-1)/2) and the normalised exponent log_q P / (k^2 / 2).

    ``exponent_decreasing`` tests the normalised exponent for a decrease
    between consecutive k; ``exponent_toward_one`` tests |exponent - 1| instead.
    ``blocks`` must make the expected count at the largest k at least 10;
    the lower bound is used as a conservative stand-in for the tail.
    """
    q = _check_q(q)
    k_top = max(k_grid)
    if blocks * (1 - q) ** k_top * q ** (k_top * (k_top - 1) / 2) < 10:
        raise ValueError(f"{blocks} blocks give fewer than 10 expected blocks with Y-down >= {k_top}")
    bb = block_batch(q, blocks, seed, stream_base, workers)
    rows = []
    for k in k_grid:
        p = float(np.count_nonzero(bb.y_down >= k)) / blocks
        se = math.sqrt(p * (1 - p) / blocks)
        lb = (1 - q) ** k * q ** (k * (k - 1) / 2)
        expo = math.log(p) / math.log(q) / (k * k / 2) if 0 < p < 1 else (0.0 if p == 1 else None)
        expo_se = se / (p * math.log(1 / q) * k * k / 2) if 0 < p < 1 else 0.0
        rows.append({"k": int(k), "p": p, "std_error": se, "lower_bound": lb,
                     "lower_bound_ok": p >= lb - n_se * se,
                     "exponent": expo, "exponent_std_error": expo_se})
    expo = [r["exponent"] for r in rows]
    decreasing = all(a is not None and b is not None and b < a for a, b in zip(expo, expo[1:]))
    toward = all(a is not None and b is not None and abs(b - 1) < abs(a - 1)
                 for a, b in zip(expo, expo[1:]))
    return {"q": q, "blocks": blocks, "seed": seed, "stream_ids": [int(s) for s in bb.stream_ids[:1]]
            + [int(s) for s in bb.stream_ids[-1:]], "tail": rows,
            "lower_bound_ok": all(r["lower_bound_ok"] for r in rows),
            "exponent_decreasing": decreasing, "exponent_toward_one": toward}


def jackknife_agrees(c: CltConstants, rel: float = 0.10) -> bool:
    keys = ("a", "eta", "sigma", "mu0")
    return all(abs(c.jackknife_std_errors[k] - c.std_errors[k]) <= rel * c.std_errors[k]
               for k in keys)


def euler_check(c: CltConstants, n_se: float = 3.0) -> bool:
    """mu0 estimate within ``n_se`` standard errors of the Euler product."""
    return abs(c.mu0_hat - euler_mu0(c.q)) <= n_se * c.std_errors["mu0"]
