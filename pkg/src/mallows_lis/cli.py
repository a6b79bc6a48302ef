"""Command-line entry point: ``mallows-lis <command> [flags]``.

Exit codes: 0 success, 2 usage or invalid input, 3 I/O failure,
4 numerical degeneracy (e.g. a zero residual variance).  JSON goes to stdout
unless ``--output`` names a file; numbers are written with ``repr`` so every
double round-trips exactly.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import chain, exact
from .config import load_config
from .estimators import (CltConstants, DegenerateEstimateError, clt_experiment,
                         estimate_constants, lds_lln_experiment)
from .monotone import lis_lds_rows
from .perm import MallowsParams, Permutation, inversions, sample_mallows_batch
from .regen import block_batch
from .rng import (DEFAULT_SEED, STREAMS_BLOCKS, STREAMS_CHAIN, STREAMS_CLT, STREAMS_CONSTANTS,
                  STREAMS_LDS, STREAMS_SAMPLER, GeometricStream)

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_DEGENERATE = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _plain(obj):
    """Recursively convert numpy scalars/arrays and tuples to JSON-native types."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline.

    Parsing the result and calling ``dumps`` again gives the same bytes.
    """
    return json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _emit(text: str, path) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as e:
        raise CliError(f"cannot write {path}: {e}", EXIT_IO) from e


# --------------------------------------------------------------------------
# argument types

def _q_open(text: str) -> float:
    try:
        q = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0 < q < 1:
        raise argparse.ArgumentTypeError(f"q must lie in (0, 1), got {q}")
    return q


def _q_positive(text: str) -> float:
    try:
        q = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not (q > 0 and math.isfinite(q)):
        raise argparse.ArgumentTypeError(f"q must be positive, got {q}")
    return q


def _int_at_least(lo: int):
    def parse(text: str) -> int:
        try:
            v = int(float(text)) if "e" in text.lower() else int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
        if v < lo:
            raise argparse.ArgumentTypeError(f"must be >= {lo}, got {v}")
        return v
    parse.__name__ = f"int>={lo}"
    return parse


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {v}")
    return v


def _int_list(text: str) -> list:
    return [int(s) for s in text.split(",") if s.strip()]


# --------------------------------------------------------------------------
# commands

def cmd_sample(args) -> int:
    params = MallowsParams(args.q)
    stream = GeometricStream(params, args.seed, STREAMS_SAMPLER)
    perms = sample_mallows_batch(args.n, args.count, params, stream)
    up, dn = lis_lds_rows(perms)
    inv = [inversions(Permutation(r, check=False)) for r in perms]
    config = {"n": args.n, "q": args.q, "seed": args.seed, "stream_id": STREAMS_SAMPLER,
              "count": args.count}
    if args.format == "json":
        records = [{"lis": up[r], "lds": dn[r], "inversions": inv[r]} for r in range(args.count)]
        if not args.stats_only:
            for r, rec in enumerate(records):
                rec["perm"] = perms[r]
        _emit(dumps({"config": config, "records": records}), args.output)
        return EXIT_OK
    buf = io.StringIO()
    if args.format == "csv":
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "perm", "lis", "lds", "inversions"])
        for r in range(args.count):
            text = "" if args.stats_only else " ".join(map(str, perms[r].tolist()))
            w.writerow([r, text, up[r], dn[r], inv[r]])
    else:
        # position -> element, one permutation per line, statistics tab-separated
        buf.write("array_form\tlis\tlds\tinversions\n")
        for r in range(args.count):
            arr = Permutation(perms[r], check=False).array_form()
            buf.write(f"{' '.join(map(str, arr.tolist()))}\t{up[r]}\t{dn[r]}\t{inv[r]}\n")
    _emit(buf.getvalue(), args.output)
    return EXIT_OK


def cmd_blocks(args) -> int:
    bb = block_batch(args.q, args.blocks, args.seed, args.stream_base, args.workers)
    try:
        bb.to_csv(args.out)
    except OSError as e:
        raise CliError(f"cannot write {args.out}: {e}", EXIT_IO) from e
    summary = bb.summary()
    summary["config"] = {"q": args.q, "blocks": args.blocks, "seed": args.seed,
                         "stream_base": args.stream_base}
    _emit(dumps(summary), args.output)
    return EXIT_OK


def cmd_estimate(args) -> int:
    c = estimate_constants(args.q, args.blocks, args.seed, args.stream_base, args.workers)
    _emit(dumps(c.to_dict()), args.output)
    return EXIT_OK


def _read_constants(path) -> CltConstants:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"constants file not found: {path}", EXIT_USAGE)
    try:
        return CltConstants.from_dict(json.loads(p.read_text()))
    except OSError as e:
        raise CliError(f"cannot read {path}: {e}", EXIT_IO) from e
    except (ValueError, TypeError) as e:
        raise CliError(f"{path} is not a constants file: {e}", EXIT_USAGE) from e


def _merge_config(args, keys) -> dict:
    """Flag values override those of ``--config``; unset flags fall back to it."""
    cfg = {}
    if args.config is not None:
        try:
            cfg = load_config(args.config)
        except FileNotFoundError as e:
            raise CliError(str(e), EXIT_USAGE) from e
        except (OSError, ValueError) as e:
            raise CliError(f"bad config {args.config}: {e}", EXIT_USAGE) from e
    out = {}
    for k in keys:
        v = getattr(args, k, None)
        out[k] = v if v is not None else cfg.get(k)
    out["thresholds"] = cfg.get("thresholds")
    return out


def cmd_clt(args) -> int:
    cfg = _merge_config(args, ("q", "n", "reps", "seed", "blocks"))
    cfg["seed"] = DEFAULT_SEED if cfg["seed"] is None else cfg["seed"]
    for k in ("q", "n", "reps"):
        if cfg[k] is None:
            raise CliError(f"--{k} is required (or give --config)", EXIT_USAGE)
    _q_open(str(cfg["q"]))
    if args.constants is not None:
        const = _read_constants(args.constants)
    else:
        const = estimate_constants(cfg["q"], int(cfg["blocks"] or 10 ** 6), cfg["seed"],
                                   STREAMS_CONSTANTS, args.workers)
    try:
        report, z = clt_experiment(cfg["q"], int(cfg["n"]), int(cfg["reps"]), const, cfg["seed"],
                                   STREAMS_CLT, cfg["thresholds"], args.workers)
    except ValueError as e:
        raise CliError(str(e), EXIT_USAGE) from e
    d = report.to_dict()
    d["config"]["constants_file"] = args.constants
    if args.raw_out is not None:
        try:
            with open(args.raw_out, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["replicate", "z"])
                w.writerows((r, repr(float(v))) for r, v in enumerate(z))
        except OSError as e:
            raise CliError(f"cannot write {args.raw_out}: {e}", EXIT_IO) from e
    _emit(dumps(d), args.output)
    return EXIT_OK


def cmd_lds(args) -> int:
    cfg = _merge_config(args, ("q", "n", "reps", "seed"))
    cfg["seed"] = DEFAULT_SEED if cfg["seed"] is None else cfg["seed"]
    for k in ("q", "n", "reps"):
        if cfg[k] is None:
            raise CliError(f"--{k} is required (or give --config)", EXIT_USAGE)
    _q_open(str(cfg["q"]))
    report = lds_lln_experiment(cfg["q"], int(cfg["n"]), int(cfg["reps"]), cfg["seed"],
                                STREAMS_LDS, cfg["thresholds"], args.workers)
    _emit(dumps(report.to_dict()), args.output)
    return EXIT_OK


def cmd_chain(args) -> int:
    q, eps, seed = args.q, args.eps, args.seed
    config = {"q": q, "mode": args.mode, "eps": eps, "seed": seed}
    out: dict = {"config": config, "mode": args.mode}
    if args.mode == "stationary":
        mu = chain.stationary_dist(q, eps)
        resid = chain.stationarity_residual(q, eps, mu.weights)
        out["reports"] = [
            chain.report("mu0", mu.weights[0], None, 0, mu.tail_mass_bound, seed),
            chain.report("mean_return_time", 1 / mu.weights[0], None, 0, mu.tail_mass_bound, seed),
            chain.report("stationarity_residual_l1", resid, None, 0, mu.tail_mass_bound, seed),
        ]
        out["weights"] = mu.weights
        out["j_max"] = mu.j_max
    elif args.mode == "firstpassage":
        config["horizon"] = args.horizon
        pmf, bound = chain.first_passage_pmf(q, args.horizon, eps)
        t = np.arange(1, pmf.size + 1)
        out["reports"] = [
            chain.report("P0(R0+ <= horizon)", math.fsum(pmf.tolist()), None, 0, bound, seed),
            chain.report("partial_mean_return_time", math.fsum((t * pmf).tolist()), None, 0, bound, seed),
        ]
        out["pmf"] = pmf
    elif args.mode == "kac":
        config.update(blocks=args.blocks, stream_id=STREAMS_CHAIN)
        res = chain.kac_check(q, args.blocks, seed, STREAMS_CHAIN, eps=eps)
        out["reports"] = [res["lhs"], res["rhs"], res["mean_hitting_time"]]
        out["z_score"] = res["z_score"]
    else:
        config.update(start=args.start, reps=args.reps, s_grid=args.s_grid,
                      stream_id=STREAMS_CHAIN + 32)
        res = chain.return_tail_probe(q, args.start, args.s_grid, args.reps, seed, STREAMS_CHAIN + 32)
        out["reports"] = [chain.report(f"P_t(R0+ > 10t + {row['s']})", row["p"], row["std_error"],
                                       args.reps, None, seed) for row in res["tail"]]
        out["fit"] = res["fit"]
    _emit(dumps(out), args.output)
    return EXIT_OK


def cmd_exact(args) -> int:
    try:
        if args.statistic == "pmf":
            perms, probs = exact.mallows_pmf_array(args.n, args.q)
            pmf = {"".join(map(str, p.tolist())): pr for p, pr in zip(perms, probs.tolist())}
        else:
            pmf = exact.exact_statistic_distribution(args.n, args.q, args.statistic)
    except ValueError as e:
        raise CliError(str(e), EXIT_USAGE) from e
    _emit(dumps(pmf), args.output)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mallows-lis",
                                 description="Monotone subsequences of Mallows permutations.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=True, workers=False):
        if seed:
            p.add_argument("--seed", type=_int_at_least(0), default=None if workers == "cfg" else DEFAULT_SEED,
                           help=f"root seed (default {DEFAULT_SEED})")
        if workers:
            p.add_argument("--workers", type=_int_at_least(1), default=None,
                           help="threads for replicate fan-out (default: $MALLOWS_LIS_WORKERS or CPU count)")
        p.add_argument("--output", "-o", default=None, help="write to this file instead of stdout")

    p = sub.add_parser("sample", help="sample Mallows permutations")
    p.add_argument("--n", type=_int_at_least(1), required=True)
    p.add_argument("--q", type=_q_open, required=True)
    p.add_argument("--count", type=_int_at_least(1), default=1)
    p.add_argument("--format", choices=("json", "csv", "array"), default="json")
    p.add_argument("--stats-only", action="store_true", help="omit the permutations themselves")
    common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("blocks", help="sample regeneration blocks to CSV")
    p.add_argument("--q", type=_q_open, required=True)
    p.add_argument("--blocks", type=_int_at_least(1), required=True)
    p.add_argument("--out", required=True, help="CSV destination (columns x,y,y_down)")
    p.add_argument("--stream-base", type=_int_at_least(0), default=STREAMS_BLOCKS)
    common(p, workers=True)
    p.set_defaults(func=cmd_blocks)

    p = sub.add_parser("estimate", help="estimate a, eta, sigma, mu0 from blocks")
    p.add_argument("--q", type=_q_open, required=True)
    p.add_argument("--blocks", type=_int_at_least(1000), required=True)
    p.add_argument("--stream-base", type=_int_at_least(0), default=STREAMS_CONSTANTS)
    common(p, workers=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("clt", help="standardized LIS against N(0, 1)")
    p.add_argument("--config", default=None, help="config file or packaged config name")
    p.add_argument("--q", type=_q_open, default=None)
    p.add_argument("--n", type=_int_at_least(1), default=None)
    p.add_argument("--reps", type=_int_at_least(1), default=None)
    p.add_argument("--blocks", type=_int_at_least(1000), default=None,
                   help="blocks for fresh constants when --constants is not given (default 10^6)")
    p.add_argument("--constants", default=None, help="CltConstants JSON from 'estimate'")
    p.add_argument("--raw-out", default=None, help="CSV of standardized samples")
    common(p, workers="cfg")
    p.set_defaults(func=cmd_clt)

    p = sub.add_parser("lds", help="LDS against sqrt(2 log n / log(1/q))")
    p.add_argument("--config", default=None, help="config file or packaged config name")
    p.add_argument("--q", type=_q_open, default=None)
    p.add_argument("--n", type=_int_at_least(2), default=None)
    p.add_argument("--reps", type=_int_at_least(1), default=None)
    common(p, workers="cfg")
    p.set_defaults(func=cmd_lds)

    p = sub.add_parser("chain", help="auxiliary chain: stationary law, Kac check, tails")
    p.add_argument("--q", type=_q_open, required=True)
    p.add_argument("--mode", choices=("stationary", "kac", "tail", "firstpassage"), required=True)
    p.add_argument("--eps", type=_positive_float, default=chain.DEFAULT_EPS)
    p.add_argument("--blocks", type=_int_at_least(10 ** 4), default=10 ** 6, help="kac mode")
    p.add_argument("--horizon", type=_int_at_least(1), default=50, help="firstpassage mode")
    p.add_argument("--start", type=_int_at_least(1), default=5, help="tail mode")
    p.add_argument("--reps", type=_int_at_least(1), default=10 ** 5, help="tail mode")
    p.add_argument("--s-grid", type=_int_list, default=list(range(0, 41, 4)), help="tail mode")
    common(p)
    p.set_defaults(func=cmd_chain)

    p = sub.add_parser("exact", help="exact distributions by enumeration (n <= 9)")
    p.add_argument("--n", type=_int_at_least(1), required=True)
    p.add_argument("--q", type=_q_positive, required=True)
    p.add_argument("--statistic", choices=("lis", "lds", "inv", "pmf"), default="pmf")
    common(p, seed=False)
    p.set_defaults(func=cmd_exact)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"mallows-lis: {e}", file=sys.stderr)
        return e.code
    except argparse.ArgumentTypeError as e:
        print(f"mallows-lis: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateEstimateError as e:
        print(f"mallows-lis: degenerate estimate: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ValueError as e:
        print(f"mallows-lis: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
