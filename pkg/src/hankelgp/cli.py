"""Command-line interface: ``hankelgp {fit,predict,verify,bench,merge}``.

Exit codes: 0 ok, 1 verification failure, 2 unsupported configuration,
3 IO/parse error. ``HGP_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import io
from . import verify as verify_mod
from .basis import Hilbert
from .exceptions import (
    DomainWarning,
    FactorizationError,
    FormatError,
    IncompatibleStructureError,
    UnsupportedConfigurationError,
)
from .gp import Hyperparams, optimize_hyperparameters, pointwise_nlpd, posterior
from .precision import Dataset, accumulate_stats, accumulate_stats_naive

logger = logging.getLogger("hankelgp")

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_UNSUPPORTED = 2
EXIT_IO = 3


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _int_list(text):
    try:
        values = [int(v) for v in text.replace("x", ",").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _domain(text):
    if text == "auto":
        return "auto"
    values = _float_list(text)
    if not values or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError("domain half-widths must be positive")
    return values


def _split(text):
    if not text.startswith("grid:"):
        raise argparse.ArgumentTypeError("split must look like grid:<w>x<h>")
    parts = text[5:].split("x")
    try:
        sizes = [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid size in {text!r}")
    if len(sizes) not in (1, 2) or any(s <= 0 for s in sizes):
        raise argparse.ArgumentTypeError(f"bad grid size in {text!r}")
    return sizes


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for accumulation (1 = sequential reference path)")
    p.add_argument("--compensated", action="store_true",
                   help="Kahan-compensated summation across accumulation chunks")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hankelgp",
        description="Structured precision matrices for basis-function GP regression.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="accumulate statistics and optimize hyperparameters")
    p.add_argument("data", type=Path, help="CSV with x_1..x_D and y columns")
    p.add_argument("--family", default="hilbert", choices=["hilbert"])
    p.add_argument("--m", type=_int_list, required=True, help="basis functions per dimension")
    p.add_argument("--domain", type=_domain, default="auto",
                   help="half-widths L_d, or 'auto' (1.1 x max |x - center|)")
    p.add_argument("--center", default="none",
                   help="'none', 'mean', or comma-separated coordinates subtracted from x")
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--init", type=_float_list, default=[1.0, 10.0, 1.0],
                   help="initial lengthscale,signal_variance,noise_variance")
    p.add_argument("--naive", action="store_true",
                   help="optimize on the dense point-by-point precision matrix")
    p.add_argument("--split", type=_split, default=None,
                   help="grid:<w>x<h> checkerboard; odd cells are held out")
    p.add_argument("--out", type=Path, required=True, help="model JSON path")
    _add_common(p)

    p = sub.add_parser("predict", help="posterior mean/variance at test inputs")
    p.add_argument("model", type=Path)
    p.add_argument("data", type=Path, help="CSV with x_1..x_D and optional y")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("verify", help="compare gamma and dense accumulation on random data")
    p.add_argument("--family", default="all",
                   choices=["all"] + list(verify_mod.FAMILIES))
    p.add_argument("--D", type=_int_list, default=None)
    p.add_argument("--m", type=_int_list, default=[1, 2, 4, 8])
    p.add_argument("--N", type=_int_list, default=[0, 1, 7, 50])
    p.add_argument("--tol", type=float, default=1e-9)
    _add_common(p)

    p = sub.add_parser("bench", help="time dense vs gamma accumulation")
    p.add_argument("--D", type=int, default=3)
    p.add_argument("--grid", type=_int_list, default=[5, 8, 10, 13, 15, 20],
                   help="basis functions per dimension for each row")
    p.add_argument("--m", type=_int_list, default=None,
                   help="single explicit per-dimension shape, e.g. 20,25,28")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--naive-cap", type=int, default=3375)
    p.add_argument("--kernel", choices=["einsum", "matmul"], default="einsum")
    p.add_argument("--memory-only", action="store_true", help="report storage only")
    p.add_argument("--out", type=Path, default=None, help="CSV path (default stdout)")
    _add_common(p)

    p = sub.add_parser("merge", help="sum compatible summary/gamma files")
    p.add_argument("paths", type=Path, nargs="+")
    p.add_argument("--out", type=Path, required=True)
    return parser


def _family_for(args, X):
    D = X.shape[1]
    ms = args.m if len(args.m) != 1 else args.m * D
    if len(ms) != D:
        raise CliError(f"--m has {len(ms)} entries but the data has D={D}", EXIT_IO)
    if args.domain == "auto":
        reach = np.abs(X).max(axis=0) if X.shape[0] else np.ones(D)
        L = [1.1 * float(r) if r > 0 else 1.0 for r in reach]
    else:
        L = args.domain if len(args.domain) != 1 else args.domain * D
        if len(L) != D:
            raise CliError(f"--domain has {len(L)} entries but the data has D={D}", EXIT_IO)
    return Hilbert(ms, L)


def _center_for(text, X):
    D = X.shape[1]
    if text == "none":
        return np.zeros(D)
    if text == "mean":
        return X.mean(axis=0)
    try:
        c = np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise CliError(f"bad --center {text!r}", EXIT_IO) from None
    if c.shape[0] != D:
        raise CliError(f"--center has {c.shape[0]} entries but the data has D={D}", EXIT_IO)
    return c


def cmd_fit(args) -> int:
    data = io.read_dataset(args.data, require_y=True)
    if data.n == 0:
        raise CliError(f"{args.data}: empty dataset", EXIT_IO)
    if args.split is not None:
        train = io.grid_split(data.X, *args.split)
        test_path = args.out.with_suffix(".test.csv")
        io.write_dataset(test_path, data.subset(~train))
        data = data.subset(train)
        logger.info("grid split: %d train rows, held-out rows written to %s", data.n, test_path)
        if data.n == 0:
            raise CliError("grid split left no training rows", EXIT_IO)
    center = _center_for(args.center, data.X)
    data = Dataset(data.X - center, data.y)
    family = _family_for(args, data.X)
    family.check_domain(data.X)
    if len(args.init) != 3:
        raise CliError("--init needs lengthscale,signal_variance,noise_variance", EXIT_IO)

    t0 = time.perf_counter()
    summary = accumulate_stats(family, data, compensated=args.compensated, threads=args.threads)
    t_acc = time.perf_counter() - t0
    logger.info("gamma accumulation: %.4f s (N=%d, M=%d)", t_acc, data.n, family.num_features)
    stats = summary
    if args.naive:
        t0 = time.perf_counter()
        stats = accumulate_stats_naive(family, data)
        logger.info("dense accumulation: %.4f s", time.perf_counter() - t0)

    t0 = time.perf_counter()
    result = optimize_hyperparameters(stats, family, Hyperparams(*args.init),
                                      iters=args.iters, learning_rate=args.lr)
    logger.info("optimization: %.4f s, NLL %.6f -> %.6f", time.perf_counter() - t0,
                result.initial_nll, result.final_nll)

    summary_path = args.out.with_suffix(".gamma")
    nbytes = io.write_summary(summary_path, summary)
    io.write_model(
        args.out,
        family=family,
        hyperparams=result.params,
        summary_path=summary_path,
        center=center,
        n=data.n,
        extra={"optimizer": {"iters": args.iters, "learning_rate": args.lr,
                             "initial_nll": result.initial_nll,
                             "final_nll": result.final_nll}},
    )
    print(f"fit: N={data.n} M={family.num_features} summary={summary_path} ({nbytes} bytes) "
          f"accumulation={t_acc:.4f}s nll={result.final_nll:.6f}")
    return EXIT_OK


def cmd_predict(args) -> int:
    doc, family, hp, summary_path = io.read_model(args.model)
    summary = io.read_summary(summary_path).to_summary()
    data = io.read_dataset(args.data, ndim=family.ndim)
    center = np.asarray(doc.get("domain", {}).get("center", np.zeros(family.ndim)))
    X = data.X - center
    header = [f"x_{d + 1}" for d in range(family.ndim)] + ["mean", "variance"]
    if data.y is not None:
        header.append("nlpd")
    header.append("warning")
    rows = []
    if data.n:
        inside = np.all(np.abs(X) <= np.asarray(family.L), axis=1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DomainWarning)
            post = posterior(summary, hp, family, X)
        nl = pointwise_nlpd(post, data.y) if data.y is not None else None
        for k in range(data.n):
            row = [repr(float(v)) for v in data.X[k]]
            row += [repr(float(post.mean[k])), repr(float(post.variance[k]))]
            if nl is not None:
                row.append(repr(float(nl[k])))
            row.append("" if inside[k] else "outside_domain")
            rows.append(row)
        if not inside.all():
            logger.warning("%d test point(s) outside the Hilbert domain", int((~inside).sum()))
        if nl is not None:
            print(f"predict: N={data.n} nlpd={float(np.mean(nl)):.6f}")
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return EXIT_OK


def cmd_verify(args) -> int:
    families = verify_mod.FAMILIES if args.family == "all" else (args.family,)
    dims = args.D or [1, 2, 3]
    if args.family == "fourier" and any(D != 1 for D in dims):
        raise CliError("unsupported: Fourier features are only available for D=1",
                       EXIT_UNSUPPORTED)
    failures = []
    count = 0
    for result in verify_mod.sweep(families, dims, args.m, args.N, skip_unsupported=True,
                                   seed=args.seed, tol=args.tol, threads=args.threads,
                                   compensated=args.compensated):
        count += 1
        print(result.line())
        if not result.passed:
            failures.append(result)
    if failures:
        for f in failures:
            print(f"verification failed for (family={f.family}, D={f.D}, m={f.m}, N={f.N})",
                  file=sys.stderr)
        return EXIT_VERIFY
    print(f"verify: {count} case(s) passed at tol={args.tol:g}")
    return EXIT_OK


def cmd_bench(args) -> int:
    grid = [tuple(args.m)] if args.m else [(m,) * args.D for m in args.grid]
    rows = bench_mod.run_benchmark(
        grid, n=args.n, reps=args.reps, naive_cap=args.naive_cap, seed=args.seed,
        threads=args.threads, time_gamma=not args.memory_only, kernel=args.kernel,
    )
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow(bench_mod.CSV_COLUMNS)
        writer.writerows(bench_mod.rows_to_records(rows))
    finally:
        if args.out:
            fh.close()
    if not args.memory_only and len(rows) > 1:
        Ms = [r.M for r in rows]
        logger.info("slopes: gamma %.3f, naive %.3f",
                    bench_mod.loglog_slope(Ms, [r.t_gamma for r in rows]),
                    bench_mod.loglog_slope(Ms, [r.t_naive for r in rows]))
    return EXIT_OK


def cmd_merge(args) -> int:
    if len(args.paths) < 2:
        raise CliError("merge needs at least two files", EXIT_IO)
    files = [io.read_summary(p) for p in args.paths]
    payload = sum(g.nbytes for f in files for g in f.gammas)
    payload += sum(f.phi_t_y.nbytes for f in files if f.has_sidecar)
    try:
        merged = io.merge_summary_files(files)
    except IncompatibleStructureError as exc:
        raise CliError(f"cannot merge: {exc}", EXIT_UNSUPPORTED) from None
    nbytes = io.write_summary_file(args.out, merged)
    print(f"merge: {len(files)} file(s), {payload} payload bytes merged, n={merged.n}, "
          f"wrote {nbytes} bytes to {args.out}")
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "verify": cmd_verify,
    "bench": cmd_bench,
    "merge": cmd_merge,
}


def main(argv=None) -> int:
    level = os.environ.get("HGP_LOG", "WARNING").upper()
    logging.basicConfig(
        level=level if isinstance(logging.getLevelName(level), int) else "WARNING",
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except UnsupportedConfigurationError as exc:
        print(f"unsupported: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FactorizationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
