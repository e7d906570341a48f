"""Command line front end: generate, embed, score, refine and sweep.

Matrices are read and written as CSV, reports as JSON. Every report carries
the resolved configuration, so a run can be repeated from its report alone.
Exit codes: 0 success, 1 algorithmic failure, 2 usage or I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
import warnings

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__, kernels
from .datasets import GENERATORS
from .embed_gp import embed_gp
from .embed_psa import SaSchedule, embed_psa
from .errors import ProcrustesEmbedError, SolverDiverged
from .measures import measure_report
from .neighborhoods import NeighborhoodGraph, eps_graph, knn_graph
from .numerics import make_rng
from .refine import refine

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
THREADS_ENV = "PROCRUSTES_EMBED_THREADS"


class UsageError(Exception):
    """Bad arguments or unreadable/unwritable files (exit code 2)."""


class AlgorithmFailure(Exception):
    """The computation ran but did not succeed (exit code 1)."""


# ---------------------------------------------------------------- file I/O

def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_csv(path: str, M, header=None) -> None:
    """Write rows of ``M`` with 17 significant digits (CRLF line ends)."""
    M = np.atleast_2d(np.asarray(M, float))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    if header is not None:
        w.writerow(header)
    w.writerows([_fmt(v) for v in row] for row in M)
    _write_text(path, buf.getvalue())


def write_table(path: str, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)
    _write_text(path, buf.getvalue())


def _write_text(path: str, text: str) -> None:
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from exc


def read_csv(path: str) -> np.ndarray:
    """Read a numeric CSV, skipping a header row when the first row is not numeric."""
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from exc
    if rows:
        try:
            [float(v) for v in rows[0]]
        except ValueError:
            rows = rows[1:]
    if not rows:
        raise UsageError(f"{path}: no data rows")
    try:
        M = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from exc
    if M.ndim != 2:
        raise UsageError(f"{path}: rows have different lengths")
    return M


def write_json(path: str, data) -> None:
    _write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- helpers

def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func",)}
    for key, val in cfg.items():
        if isinstance(val, str) and key in _PATH_KEYS:
            cfg[key] = os.path.abspath(val)
    cfg["version"] = __version__
    cfg["kernel_backend"] = kernels.BACKEND
    return cfg


_PATH_KEYS = {"input", "embedding", "out", "truth", "jacobians", "report", "trace", "sa_trace",
              "graph", "plot_csv"}


def _graph(args, X) -> NeighborhoodGraph:
    cache = getattr(args, "graph", None)
    if cache and os.path.exists(cache):
        try:
            with open(cache) as fh:
                g = NeighborhoodGraph.from_json(fh.read())
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot load graph {cache}: {exc}") from exc
        if g.n != X.shape[0]:
            raise UsageError(f"graph {cache} has {g.n} points, input has {X.shape[0]}")
        return g
    g = _build_graph(X, args.k, args.eps)
    if cache:
        _write_text(cache, g.to_json())
    return g


def _build_graph(X, k, eps):
    if (k is None) == (eps is None):
        raise UsageError("give exactly one of --k and --eps")
    return knn_graph(X, k) if k is not None else eps_graph(X, eps)


def _k_list(text: str):
    try:
        ks = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad k list {text!r}") from exc
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("k values must be positive integers")
    return ks


def _header(args, d, prefix):
    return [f"{prefix}{j}" for j in range(d)] if args.header else None


def _rows_match(X, Y, what):
    if X.shape[0] != Y.shape[0]:
        raise UsageError(f"{what} has {Y.shape[0]} rows, input has {X.shape[0]}")


# ---------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    gen = GENERATORS[args.kind]
    rng = make_rng(args.rng_seed)
    if args.kind == "swissroll":
        ds = gen(args.n, noise_sigma=args.noise, rng=rng)
    else:
        if args.noise:
            raise UsageError("--noise is only supported for --kind swissroll")
        ds = gen(args.n, rng=rng)
    write_csv(args.out, ds.X, _header(args, ds.X.shape[1], "x"))
    if args.truth:
        write_csv(args.truth, ds.Z, _header(args, ds.Z.shape[1], "z"))
    if args.jacobians:
        if ds.jacobians is None:
            raise UsageError(f"{args.kind} has no analytic tangent frames")
        J = ds.jacobians.reshape(ds.X.shape[0], -1)
        q, d = ds.jacobians.shape[1:]
        hdr = [f"J{a}{b}" for a in range(q) for b in range(d)] if args.header else None
        write_csv(args.jacobians, J, hdr)
    return EXIT_OK


def _schedule(args) -> SaSchedule:
    return SaSchedule(alpha=args.sa_alpha, steps_per_temp=args.sa_steps,
                      cluster_moves=args.sa_cluster_moves, quench_sweeps=args.sa_quench_sweeps)


def cmd_embed(args) -> int:
    X = read_csv(args.input)
    timings = {}
    t = time.perf_counter()
    g = _graph(args, X)
    timings["graph"] = time.perf_counter() - t
    rng = make_rng(args.rng_seed)
    report = {"config": _config(args), "warnings": []}
    failure = None
    t = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if args.algo == "gp":
            seed = "random" if args.seed_random else (
                "center" if args.seed_index is None else args.seed_index)
            res = embed_gp(X, g, args.dim, seed_index=seed, rng=rng)
            report["gp"] = {"seed_index": res.info["seed_index"],
                            "components": res.info["components"]}
        else:
            res = embed_psa(X, g, args.dim, _schedule(args), rng=rng, init=args.sa_init,
                            chains=args.sa_chains, select=args.sa_select)
            info = res.info
            report["psa"] = {k: info[k] for k in ("f_init", "f_final", "coverage",
                                                   "alignment_complete", "chains")}
            if args.sa_trace:
                write_table(args.sa_trace,
                            ["outer", "temperature", "f", "acceptance", "mean_cluster"],
                            [[r["outer"], _fmt(r["T"]), _fmt(r["f"]), _fmt(r["acceptance"]),
                              _fmt(r["mean_cluster"])] for r in info["sa_trace"]])
            if not info["alignment_complete"] and not args.allow_incomplete:
                failure = (f"alignment incomplete: coverage {info['coverage']:.4f} "
                           "(use --allow-incomplete to accept)")
    timings["embed"] = time.perf_counter() - t
    Y = res.Y
    if args.refine and failure is None:
        t = time.perf_counter()
        before = measure_report(X, Y, g, pca=False)
        Y, trace = refine(X, Y, g, rel_tol=args.refine_tol, max_iters=args.refine_max_iters)
        timings["refine"] = time.perf_counter() - t
        report["refine"] = {"iterations": len(trace.iterations) - 1,
                            "stop_reason": trace.stop_reason,
                            "R_N_before": before.R_N}
    report["warnings"] = [str(w.message) for w in caught]
    t = time.perf_counter()
    rep = measure_report(X, Y, g)
    timings["score"] = time.perf_counter() - t
    report["measures"] = _measures(rep)
    report["timings"] = timings
    suffix = ""
    if failure is not None:
        report["error"] = failure
        suffix = ".partial"
    write_csv(args.out + suffix, Y, _header(args, Y.shape[1], "y"))
    write_json(args.report + suffix, report)
    print(rep.summary())
    if failure is not None:
        raise AlgorithmFailure(failure)
    return EXIT_OK


def _measures(rep) -> dict:
    d = rep.to_dict()
    d.pop("per_neighborhood")
    return d


def cmd_score(args) -> int:
    X = read_csv(args.input)
    Y = read_csv(args.embedding)
    _rows_match(X, Y, args.embedding)
    if Y.shape[1] > X.shape[1]:
        raise UsageError("embedding has more columns than the input")
    params = [("k", k) for k in args.k] if args.k else [("eps", args.eps)]
    if args.k and args.eps is not None:
        raise UsageError("give exactly one of --k and --eps")
    if not args.k and args.eps is None:
        raise UsageError("give exactly one of --k and --eps")
    reports = []
    long_rows = []
    for kind, val in params:
        g = knn_graph(X, val) if kind == "k" else eps_graph(X, val)
        rep = measure_report(X, Y, g)
        print(f"{kind}={val} {rep.summary()}")
        entry = {kind: val, **(rep.to_dict() if args.per_neighborhood else _measures(rep))}
        reports.append(entry)
        for name in ("R", "R_N", "R_PCA", "R_C", "lower_bound_N"):
            long_rows.append([val, name, _fmt(getattr(rep, name))])
    if args.out:
        write_json(args.out, {"config": _config(args), "reports": reports})
    if args.plot_csv:
        write_table(args.plot_csv, ["param", "measure", "value"], long_rows)
    return EXIT_OK


def cmd_refine(args) -> int:
    X = read_csv(args.input)
    Y0 = read_csv(args.embedding)
    _rows_match(X, Y0, args.embedding)
    g = _graph(args, X)
    Y, trace = refine(X, Y0, g, rel_tol=args.tol, max_iters=args.max_iters)
    write_csv(args.out, Y, _header(args, Y.shape[1], "y"))
    if args.trace:
        write_table(args.trace, ["iter", "R", "R_N", "max_displacement"],
                    [[r["iter"], _fmt(r["R"]), _fmt(r["R_N"]), _fmt(r["max_displacement"])]
                     for r in trace.iterations])
    first, last = trace.iterations[0], trace.iterations[-1]
    print(f"R {first['R']:.6g} -> {last['R']:.6g}, R_N {first['R_N']:.6g} -> "
          f"{last['R_N']:.6g} ({trace.stop_reason}, {len(trace.iterations) - 1} iterations)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.input:
        X = read_csv(args.input)
    else:
        rng = make_rng(args.rng_seed)
        X = GENERATORS[args.kind](args.n, rng=rng).X
    rows = []
    for k in args.k:
        rng = make_rng(args.rng_seed)
        t = time.perf_counter()
        g = knn_graph(X, k)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            if args.algo == "gp":
                Y = embed_gp(X, g, args.dim).Y
            else:
                Y = embed_psa(X, g, args.dim, _schedule(args), rng=rng,
                              chains=args.sa_chains).Y
            if args.refine:
                Y, _ = refine(X, Y, g)
        rep = measure_report(X, Y, g, pca=False)
        rows.append([k, rep.R_N, rep.R_C, rep.lower_bound_N, time.perf_counter() - t])
    best = int(np.argmin([r[1] for r in rows]))
    table = [[r[0], _fmt(r[1]), _fmt(r[2]), _fmt(r[3]), f"{r[4]:.3f}", int(i == best)]
             for i, r in enumerate(rows)]
    header = ["k", "R_N", "R_C", "lower_bound_N", "runtime_s", "argmin"]
    if args.out:
        write_table(args.out, header, table)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(header)
        w.writerows(table)
    if args.plot_csv:
        write_table(args.plot_csv, ["param", "measure", "value"],
                    [[r[0], name, _fmt(v)] for r in rows
                     for name, v in zip(("R_N", "R_C", "lower_bound_N"), r[1:4])])
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _count(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be a non-negative integer")
    return v


def _seed(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("rng seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="procrustes-embed", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--rng-seed", type=_seed, default=0)
    common.add_argument("--threads", type=_positive_int, default=None,
                        help=f"cap on BLAS threads (default: ${THREADS_ENV})")
    common.add_argument("--header", action="store_true", help="write a header row in CSV outputs")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("generate", parents=[common], help="sample a synthetic dataset")
    s.add_argument("--kind", choices=sorted(GENERATORS), required=True)
    s.add_argument("--n", type=_positive_int, required=True)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--out", required=True)
    s.add_argument("--truth")
    s.add_argument("--jacobians")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("embed", parents=[common], help="embed a point set with GP or PSA")
    s.add_argument("--input", required=True)
    s.add_argument("--algo", choices=("gp", "psa"), default="gp")
    s.add_argument("--k", type=_positive_int)
    s.add_argument("--eps", type=float)
    s.add_argument("--dim", type=_positive_int, default=2)
    seed = s.add_mutually_exclusive_group()
    seed.add_argument("--seed-index", type=int)
    seed.add_argument("--seed-random", action="store_true")
    s.add_argument("--refine", action="store_true")
    s.add_argument("--refine-tol", type=float, default=1e-6)
    s.add_argument("--refine-max-iters", type=_positive_int, default=200)
    s.add_argument("--sa-alpha", type=float, default=0.95)
    s.add_argument("--sa-steps", type=_positive_int)
    s.add_argument("--sa-chains", type=_positive_int, default=1)
    s.add_argument("--sa-cluster-moves", type=_count, default=50,
                   help="cluster reflection moves per temperature (0: single-frame moves only)")
    s.add_argument("--sa-quench-sweeps", type=_count, default=2000,
                   help="maximum descent sweeps after cooling (0: none)")
    s.add_argument("--sa-init", choices=("from-gp", "random"), default="from-gp")
    s.add_argument("--sa-select", choices=("R", "f"), default="R")
    s.add_argument("--sa-trace", help="CSV of (outer, temperature, f, acceptance, mean_cluster)")
    s.add_argument("--allow-incomplete", action="store_true",
                   help="accept an SA alignment below the coverage target")
    s.add_argument("--graph", help="neighborhood graph JSON cache (read if present, else written)")
    s.add_argument("--out", default="Y.csv")
    s.add_argument("--report", default="report.json")
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("score", parents=[common], help="score an embedding")
    s.add_argument("--input", required=True)
    s.add_argument("--embedding", required=True)
    s.add_argument("--k", type=_k_list, help="comma separated neighborhood sizes")
    s.add_argument("--eps", type=float)
    s.add_argument("--out", help="JSON report")
    s.add_argument("--per-neighborhood", action="store_true",
                   help="include per-neighborhood statistics in the JSON report")
    s.add_argument("--plot-csv", help="long-format CSV (param, measure, value)")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("refine", parents=[common], help="refine an embedding")
    s.add_argument("--input", required=True)
    s.add_argument("--embedding", required=True)
    s.add_argument("--k", type=_positive_int)
    s.add_argument("--eps", type=float)
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--max-iters", type=_positive_int, default=200)
    s.add_argument("--graph")
    s.add_argument("--out", default="Y_refined.csv")
    s.add_argument("--trace", default="refine_trace.csv")
    s.set_defaults(func=cmd_refine)

    s = sub.add_parser("sweep", parents=[common], help="score an algorithm across k")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--input")
    src.add_argument("--kind", choices=sorted(GENERATORS))
    s.add_argument("--n", type=_positive_int, default=1600)
    s.add_argument("--algo", choices=("gp", "psa"), default="gp")
    s.add_argument("--k", type=_k_list, default=[6, 9, 12, 15, 18])
    s.add_argument("--dim", type=_positive_int, default=2)
    s.add_argument("--refine", action="store_true")
    s.add_argument("--sa-alpha", type=float, default=0.95)
    s.add_argument("--sa-steps", type=_positive_int)
    s.add_argument("--sa-chains", type=_positive_int, default=1)
    s.add_argument("--sa-cluster-moves", type=_count, default=50,
                   help="cluster reflection moves per temperature (0: single-frame moves only)")
    s.add_argument("--sa-quench-sweeps", type=_count, default=2000,
                   help="maximum descent sweeps after cooling (0: none)")
    s.add_argument("--out", help="CSV table (stdout when omitted)")
    s.add_argument("--plot-csv")
    s.set_defaults(func=cmd_sweep)
    return p


def _threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return None


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        threads = _threads(args)
        args.threads = threads
        with threadpool_limits(limits=threads):
            return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AlgorithmFailure, SolverDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except ValueError as exc:
        # InvalidInput and malformed numeric arguments
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ProcrustesEmbedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
