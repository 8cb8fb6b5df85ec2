"""Command-line interface.

Subcommands: run <config>, reproduce <fig>, detequiv <problem-file>,
scaling <kind>, lemma-check <kind>.  Exit codes: 0 success, 2 config error,
3 numerical failure.  MIMO_LAB_THREADS caps trial-chunk parallelism.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from . import bounds as bnd
from .covmodel import stream
from .detequiv import (
    CONCENTRATION_KINDS,
    DetEquivProblem,
    DivergenceError,
    DomainError,
    NearCriticalPoint,
    concentration_check,
    solve_fixed_point,
)
from .harness import ConfigError, load_config, reproduce_figure, run_experiment, write_results

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _parse_detequiv_problem(path: str) -> DetEquivProblem:
    """Problem description: flat key = value with diagonal matrices.

    Keys: N (dimension), z (negative real), A and Q as comma-separated
    diagonals or 'zero'/'identity', and one or more theta lines, each either
    'identity x <count>' or a comma-separated diagonal (optionally with
    'x <count>').
    """
    N = None
    z = None
    A = Q = None
    thetas, counts = [], []

    def diag_of(val, n):
        if val == "identity":
            return np.eye(n)
        if val == "zero":
            return np.zeros((n, n))
        entries = np.array([float(x) for x in val.split(",")])
        if len(entries) != n:
            raise ConfigError(f"diagonal has {len(entries)} entries, expected N={n}")
        return np.diag(entries)

    raw_items = []
    with open(path) as fh:
        for lineno, rawline in enumerate(fh, start=1):
            line = rawline.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            raw_items.append((lineno, key.strip().lower(), val.strip()))
    for lineno, key, val in raw_items:
        if key == "n":
            N = int(val)
        elif key == "z":
            z = float(val)
    if N is None or z is None:
        raise ConfigError(f"{path}: both N and z are required")
    for lineno, key, val in raw_items:
        if key in ("n", "z"):
            continue
        if key == "a":
            A = diag_of(val, N)
        elif key == "q":
            Q = diag_of(val, N)
        elif key == "theta":
            count = 1
            if "x" in val:
                val, _, cnt = val.rpartition("x")
                val = val.strip()
                count = int(cnt)
            thetas.append(diag_of(val, N))
            counts.append(count)
        else:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
    A = np.zeros((N, N)) if A is None else A
    Q = np.eye(N) if Q is None else Q
    return DetEquivProblem(thetas=thetas, A=A, Q=Q, z=z, counts=counts or None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mimo-lab",
        description="Multicell massive-MIMO Monte Carlo simulator and "
                    "deterministic-equivalent cross-validator",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--trials", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--format", choices=("csv", "plotdata"), default="csv")

    p_fig = sub.add_parser("reproduce", help="reproduce one of the figures")
    p_fig.add_argument("fig", choices=("fig2", "fig3", "fig5", "fig6", "fig7"))
    p_fig.add_argument("--scale", choices=("desk", "full"), default="desk")
    p_fig.add_argument("--seed", type=int, default=1)
    p_fig.add_argument("--trials", type=int, default=None)
    p_fig.add_argument("--out", default=None)
    p_fig.add_argument("--format", choices=("csv", "plotdata"), default="csv")

    p_de = sub.add_parser("detequiv", help="solve a fixed-point problem file")
    p_de.add_argument("problem")
    p_de.add_argument("--tol", type=float, default=1e-10)
    p_de.add_argument("--max-iter", type=int, default=10_000)

    p_sc = sub.add_parser("scaling", help="closed-form scaling laws")
    p_sc.add_argument("kind", choices=("contaminated", "global-orth",
                                       "coherent-orth", "strong", "verystrong"))
    p_sc.add_argument("--M", type=int, required=True)
    p_sc.add_argument("--K", type=int, required=True)
    p_sc.add_argument("--L", type=int, required=True)
    p_sc.add_argument("--T-c", type=int, required=True, dest="T_c")
    p_sc.add_argument("--snr-db", type=float, default=10.0)
    p_sc.add_argument("--iota", type=float, default=0.2)
    p_sc.add_argument("--r", type=int, default=None)

    p_lc = sub.add_parser("lemma-check", help="concentration lemma statistics")
    p_lc.add_argument("kind", choices=CONCENTRATION_KINDS)
    p_lc.add_argument("dims", nargs="?", default="64,128,256,512")
    p_lc.add_argument("--trials", type=int, default=1000)
    p_lc.add_argument("--seed", type=int, default=1)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    try:
        if args.cmd == "run":
            spec = load_config(args.config)
            if args.seed is not None:
                spec = replace(spec, seed=args.seed).validate()
            if args.trials is not None:
                spec = replace(spec, trials=args.trials).validate()
            table = run_experiment(spec)
            if args.out:
                write_results(table, args.out, args.format)
                print(f"wrote {len(table.rows)} rows to {args.out}")
            else:
                _print_table(table)
        elif args.cmd == "reproduce":
            table = reproduce_figure(args.fig, scale=args.scale, seed=args.seed,
                                     trials=args.trials)
            if args.out:
                write_results(table, args.out, args.format)
                print(f"wrote {len(table.rows)} rows to {args.out}")
            else:
                _print_table(table)
        elif args.cmd == "detequiv":
            problem = _parse_detequiv_problem(args.problem)
            sol = solve_fixed_point(problem, tol=args.tol, max_iter=args.max_iter)
            print("e:", " ".join(f"{x:.12g}" for x in sol.e))
            print(f"m: {sol.m:.12g}")
            print(f"iterations: {sol.iterations}")
        elif args.cmd == "scaling":
            snr = 10.0 ** (args.snr_db / 10.0)
            if args.kind == "contaminated":
                val = bnd.legacy_scaling("Contaminated", args.M, args.K, args.L,
                                         args.T_c, args.iota, snr)
            elif args.kind == "global-orth":
                val = bnd.legacy_scaling("GlobalOrth", args.M, args.K, args.L,
                                         args.T_c, args.iota, snr)
            elif args.kind == "coherent-orth":
                val = bnd.asymptotic_capacity("strong", "ul", args.M, args.K, args.L,
                                              args.T_c, snr, r=args.r, pilot="orthogonal")
            else:
                val = bnd.asymptotic_capacity(args.kind, "ul", args.M, args.K, args.L,
                                              args.T_c, snr, r=args.r,
                                              pilot="nonorthogonal")
            print(f"{val:.12g}")
        elif args.cmd == "lemma-check":
            dims = [int(x) for x in str(args.dims).split(",")]
            rep = concentration_check(args.kind, dims, args.trials, stream(args.seed, 9))
            print(rep)
    except (DivergenceError, DomainError, NearCriticalPoint, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def _print_table(table):
    for a in table.audit:
        print(f"# {a}")
    from .harness import CSV_COLUMNS, _fmt
    print(CSV_COLUMNS)
    for row in table.rows:
        print(",".join(_fmt(getattr(row, c)) for c in CSV_COLUMNS.split(",")))


if __name__ == "__main__":
    sys.exit(main())
