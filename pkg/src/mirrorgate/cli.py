"""Command-line driver: ``mirrorgate {solve,certify,montecarlo,bench,gen}``.

Exit codes: 0 success, 1 I/O or validation error, 2 the run took no
productive step.
"""
from __future__ import annotations

import argparse
import csv
import math
import sys

import numpy as np

from .bench import BenchRow, bench_grid, level_increments
from .certificate import certify
from .errors import MirrorGateError
from .generate import random_box_lp, random_column_sparse_lp
from .io import atomic_write_text, parse_problem_file, write_problem_file, write_trace_csv
from .montecarlo import monte_carlo
from .problem import eval_constraints_max, eval_objective
from .prox import make_setup
from .solver import (DEFAULT_CONSTANT, TIGHT_CONSTANT, SolverConfig, Status, default_bounds,
                     run)
from .sparse import format_float

EXIT_OK, EXIT_ERROR, EXIT_NO_PRODUCTIVE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Bad flags exit 1; exit 2 is reserved for runs without productive steps."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _budget(text):
    if text in ("deterministic", "stochastic", "expectation"):
        return text
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            "budget must be deterministic, stochastic, expectation or an integer") from None
    if value < 1:
        raise argparse.ArgumentTypeError("budget must be >= 1")
    return value


def _constant(text):
    if text == "tight":
        return TIGHT_CONSTANT
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("confidence constant must be a number or 'tight'") from None


def _int_list(text):
    return [int(t) for t in text.split(",") if t]


def _add_solve_flags(p, oracle_default="exact", budget_default="deterministic"):
    p.add_argument("--problem", required=True, help="problem file")
    p.add_argument("--eps-g", type=float, required=True)
    p.add_argument("--eps-f", type=float, default=None,
                   help="objective tolerance (default M_f * eps_g / M_g)")
    p.add_argument("--mf", type=float, default=None, help="bound on objective subgradient norms")
    p.add_argument("--mg", type=float, default=None, help="bound on constraint subgradient norms")
    p.add_argument("--prox", choices=("euclidean", "entropy"), default="euclidean")
    p.add_argument("--budget", type=_budget, default=budget_default,
                   help="deterministic | stochastic | expectation | N")
    p.add_argument("--sigma", type=float, default=0.1, help="failure probability")
    p.add_argument("--confidence-const", type=_constant, default=DEFAULT_CONSTANT,
                   help="81 (default) or 'tight'")
    p.add_argument("--oracle", choices=("exact", "randomized"), default=oracle_default)
    p.add_argument("--randomize-objective", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--r2", type=float, default=None, help="R^2 = V_{x1}(x*) if known")
    p.add_argument("--rbar2", type=float, default=None, help="override the set radius bound")


def build_parser():
    parser = _Parser(prog="mirrorgate", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("solve", "certify"):
        p = sub.add_parser(name, help="run the solver" if name == "solve"
                           else "run the solver and print the duality-gap certificate")
        _add_solve_flags(p)
        p.add_argument("--trace", default=None, help="write a trace CSV here")
        p.add_argument("--verbose-trace", action="store_true",
                       help="log every iteration in the trace")
        p.add_argument("--record-f", action="store_true", help="log f(x^k) as well")
        if name == "solve":
            p.add_argument("--certify", action="store_true")

    p = sub.add_parser("montecarlo", help="failure rate over repeated seeded runs")
    _add_solve_flags(p, oracle_default="randomized", budget_default="stochastic")
    p.add_argument("--runs", type=int, required=True)
    p.add_argument("--reference", type=float, default=None, help="optimal value f*")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=None, help="per-run CSV")

    p = sub.add_parser("bench", help="per-iteration operation counts over a grid")
    p.add_argument("--m", type=_int_list, default=[1024, 2048, 4096])
    p.add_argument("--s-m", type=_int_list, default=[4])
    p.add_argument("--n-ratio", type=float, default=1.0)
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--oracle", choices=("exact", "randomized"), default="randomized")
    p.add_argument("--dense-baseline", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="CSV output (default stdout)")

    p = sub.add_parser("gen", help="write a random problem file")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--row-nnz", type=int, default=None)
    g.add_argument("--col-nnz", type=int, default=None)
    p.add_argument("--lo", type=float, default=0.0)
    p.add_argument("--hi", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def _setup_and_config(args, problem, verbose=False, record_f=False):
    setup = make_setup(problem.feasible_set, args.prox, R2=args.r2, Rbar2=args.rbar2)
    M_f, M_g = args.mf, args.mg
    if M_f is None or M_g is None:
        dM_f, dM_g = default_bounds(problem, setup, args.oracle, args.randomize_objective)
        M_f = dM_f if M_f is None else M_f
        M_g = dM_g if M_g is None else M_g
    cfg = SolverConfig(eps_g=args.eps_g, M_f=M_f, M_g=M_g, eps_f=args.eps_f, sigma=args.sigma,
                       budget=args.budget, deviation_constant=args.confidence_const,
                       seed=args.seed, oracle=args.oracle,
                       randomize_objective=args.randomize_objective,
                       verbose=verbose, record_f=record_f)
    return setup, cfg


def _emit(out, key, value):
    if isinstance(value, float):
        value = format_float(value)
    print(f"{key} {value}", file=out)


def cmd_solve(args, out, want_certificate):
    problem = parse_problem_file(args.problem)
    setup, cfg = _setup_and_config(args, problem, args.verbose_trace, args.record_f)
    if want_certificate and cfg.oracle != "exact":
        raise UsageError("certificates are only defined for the exact oracle")
    trace, status = run(problem, setup, cfg)
    cert = None
    if status is Status.OK and want_certificate:
        cert = certify(problem, trace)
    if args.trace:
        write_trace_csv(trace, args.trace, problem, cert)
    _emit(out, "status", status.value)
    _emit(out, "N", trace.N)
    _emit(out, "N_I", trace.n_productive)
    _emit(out, "N_J", trace.n_nonproductive)
    _emit(out, "eps_g", cfg.eps_g)
    _emit(out, "eps_f", cfg.target_eps_f)
    if status is not Status.OK:
        return EXIT_NO_PRODUCTIVE
    _emit(out, "f_xbar", eval_objective(problem, trace.xbar))
    _emit(out, "g_xbar", eval_constraints_max(problem, trace.xbar)[0])
    if cert is not None:
        _emit(out, "phi_lambda", cert.phi_val)
        _emit(out, "gap", cert.gap)
        _emit(out, "gap_within_eps_f", str(cert.gap <= cfg.target_eps_f).lower())
        _emit(out, "lambda_nnz", cert.lambda_nnz)
    return EXIT_OK


def cmd_montecarlo(args, out):
    if args.runs < 1:
        raise UsageError("--runs must be a positive integer")
    problem = parse_problem_file(args.problem)
    setup, cfg = _setup_and_config(args, problem)
    summary = monte_carlo(problem, setup, cfg, args.runs, args.reference, args.workers)
    if args.out:
        lines = ["run,status,f_excess,g_xbar,failed"]
        lines += [f"{o.run_index},{o.status.value},{format_float(o.f_excess)},"
                  f"{format_float(o.g_val)},{int(o.failed)}" for o in summary.outcomes]
        atomic_write_text(args.out, "\n".join(lines) + "\n")
    _emit(out, "runs", summary.runs)
    _emit(out, "N", summary.N)
    _emit(out, "failures", summary.failures)
    _emit(out, "failure_fraction", summary.failure_fraction)
    _emit(out, "ci95_low", float(summary.ci_low))
    _emit(out, "ci95_high", float(summary.ci_high))
    _emit(out, "sigma", cfg.sigma)
    return EXIT_OK


def cmd_bench(args, out):
    rows = bench_grid(args.m, args.s_m, args.iterations, args.oracle, args.seed,
                      args.n_ratio, args.dense_baseline)
    lines = []
    writer = csv.writer(_Lines(lines), lineterminator="")
    writer.writerow(BenchRow.FIELDS)
    for r in rows:
        writer.writerow([_cell(getattr(r, f)) for f in BenchRow.FIELDS])
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    else:
        out.write(text)
    ok = all(r.law_holds for r in rows)
    for s_m, incs in level_increments(rows).items():
        for m, inc in incs:
            if inc > 1.0 + 1e-9:
                ok = False
                print(f"level increase {inc:.3f} > 1 at m={m}, s_m={s_m}", file=sys.stderr)
    if not ok:
        print("cost law violated", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


class _Lines:
    def __init__(self, sink):
        self.sink = sink

    def write(self, s):
        self.sink.append(s)


def _cell(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return "" if math.isnan(v) else format(v, ".6g")
    return v


def cmd_gen(args, out):
    rng = np.random.default_rng(args.seed)
    if args.col_nnz is not None:
        problem = random_column_sparse_lp(args.m, args.n, args.col_nnz, rng, args.lo, args.hi)
    else:
        row_nnz = args.row_nnz if args.row_nnz is not None else min(3, args.n)
        problem = random_box_lp(args.n, args.m, row_nnz, rng, args.lo, args.hi)
    write_problem_file(problem, args.out)
    _emit(out, "wrote", args.out)
    _emit(out, "s_n", problem.A.s_n)
    _emit(out, "s_m", problem.A.s_m)
    return EXIT_OK


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "solve":
            return cmd_solve(args, out, args.certify)
        if args.command == "certify":
            return cmd_solve(args, out, True)
        if args.command == "montecarlo":
            return cmd_montecarlo(args, out)
        if args.command == "bench":
            return cmd_bench(args, out)
        return cmd_gen(args, out)
    except UsageError as exc:
        print(f"mirrorgate {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (MirrorGateError, OSError, ValueError) as exc:
        print(f"mirrorgate {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
