"""
Command-line entry point.

    covsel threshold --samples FILE --lambda 0.3 --out C_H.mtx
    covsel embed     --pattern FILE
    covsel solve     --cov C_H.mtx --out X.mtx --report solve.txt
    covsel estimate  --samples FILE --lambda 0.3 --out X.mtx --report est.txt
    covsel check     --cov C.mtx --lambda 0.3
    covsel bench     banded --preset smoke
    covsel bench     graph --pattern G.mtx --samples 5000 --lambda 0.2

Exit codes: 0 success, 1 solver did not converge (the partial report is
still written), 2 bad input or usage.
"""

import argparse
import logging
import sys
import time
from typing import List, Optional

from .bench import graph_case_run, scaling_run
from .chordal import build_clique_tree, embedding_stats, fill_reducing_order, symbolic_embed
from .config import (
    BENCH_PRESET_ORDER,
    BENCH_PRESETS,
    DEFAULT_BENCH_PRESET,
    DEFAULT_BLOCK_SIZE,
    DEFAULT_ORDERING,
    ORDERING_ORDER,
    default_threads,
)
from .errors import ConfigError, CovselError, NotConvergedError
from .mmio import read_matrix_market, read_pattern, read_samples, write_matrix_market, write_pattern
from .newton_cg import PRECONDITIONERS, NewtonResult, SolverConfig, newton_solve
from .pipeline import estimate_precision, exactness_check, kkt_check
from .reports import format_record, format_table, solver_summary, write_json, write_key_values
from .threshold import LambdaSpec, threshold_blocks

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_BAD_INPUT = 2


# ------------------------------------------------------------------
# Parser
# ------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: $COVSEL_THREADS or 1)")


def _add_lambda(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="off-diagonal threshold")
    p.add_argument("--lambda-table", default=None, help="Matrix Market file of per-pair thresholds")
    p.add_argument("--prior", default=None, help="Matrix Market pattern of allowed nonzeros")


def _add_solver(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="JSON file of solver settings")
    p.add_argument("--ordering", choices=ORDERING_ORDER, default=DEFAULT_ORDERING)
    p.add_argument("--amalgamate", type=int, default=0, help="max columns per merged supernode (0: off)")
    p.add_argument("--newton-tol", type=float, default=None)
    p.add_argument("--max-newton", type=int, default=None)
    p.add_argument("--preconditioner", choices=PRECONDITIONERS, default=None)
    p.add_argument("--diagnostics", action="store_true", help="monitor condition estimates along the iterates")


def _add_reports(p: argparse.ArgumentParser) -> None:
    p.add_argument("--report", default=None, help="key=value report file")
    p.add_argument("--report-json", default=None, help="JSON report file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="covsel", description="Sparse inverse covariance by thresholding and max-det completion")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("threshold", help="soft-threshold a covariance")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--samples", help="sample file")
    src.add_argument("--cov", help="Matrix Market covariance")
    _add_lambda(p)
    p.add_argument("--block-size", "--block", type=int, default=DEFAULT_BLOCK_SIZE)
    p.add_argument("--out", required=True, help="thresholded matrix (Matrix Market)")
    _add_reports(p)
    _add_common(p)

    p = sub.add_parser("embed", help="chordal embedding of a pattern")
    p.add_argument("--pattern", required=True)
    p.add_argument("--ordering", choices=ORDERING_ORDER, default=DEFAULT_ORDERING)
    p.add_argument("--amalgamate", type=int, default=0)
    p.add_argument("--out", default=None, help="embedded pattern (Matrix Market)")
    _add_reports(p)
    _add_common(p)

    p = sub.add_parser("solve", help="max-det completion of a sparse matrix")
    p.add_argument("--cov", required=True, help="thresholded matrix (Matrix Market)")
    p.add_argument("--out", default=None, help="estimate (Matrix Market)")
    _add_solver(p)
    _add_reports(p)
    _add_common(p)

    p = sub.add_parser("estimate", help="threshold, embed and solve")
    p.add_argument("--samples", required=True)
    _add_lambda(p)
    p.add_argument("--block-size", "--block", type=int, default=DEFAULT_BLOCK_SIZE)
    p.add_argument("--out", default=None)
    _add_solver(p)
    _add_reports(p)
    _add_common(p)

    p = sub.add_parser("check", help="dense exactness diagnostic")
    p.add_argument("--cov", required=True, help="Matrix Market covariance")
    _add_lambda(p)
    p.add_argument("--estimate", default=None, help="also check optimality of this estimate")
    p.add_argument("--kkt-tol", type=float, default=1e-6)
    _add_reports(p)
    _add_common(p)

    p = sub.add_parser("bench", help="synthetic case studies")
    bench = p.add_subparsers(dest="bench", required=True)

    b = bench.add_parser("banded", help="runtime scaling on corrupted banded matrices")
    b.add_argument("--preset", choices=BENCH_PRESET_ORDER, default=DEFAULT_BENCH_PRESET)
    b.add_argument("--sizes", default=None, help="comma-separated sizes, overrides the preset")
    b.add_argument("--bandwidth", type=int, default=None)
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--amalgamate", type=int, default=None)
    b.add_argument("--ordering", choices=ORDERING_ORDER, default=None)
    b.add_argument("--out", default=None, help="key=value report file")
    b.add_argument("--report-json", default=None)
    _add_common(b)

    b = bench.add_parser("graph", help="estimate from samples drawn on a given graph")
    b.add_argument("--pattern", required=True)
    b.add_argument("--samples", type=int, default=5000, help="number of samples to draw")
    b.add_argument("--seed", type=int, default=7)
    b.add_argument("--lambda", dest="lam", type=float, required=True)
    b.add_argument("--out", default=None, help="key=value report file")
    b.add_argument("--report-json", default=None)
    _add_common(b)

    return parser


# ------------------------------------------------------------------
# Helpers
# ------------------------------------------------------------------

def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)


def _lambda_spec(args) -> LambdaSpec:
    if args.lam is None and args.lambda_table is None:
        raise ConfigError("give --lambda, --lambda-table or both")
    table = read_matrix_market(args.lambda_table) if args.lambda_table else None
    return LambdaSpec(default=args.lam if args.lam is not None else 0.0, table=table)


def _prior(args):
    return read_pattern(args.prior) if args.prior else None


def _solver_config(args) -> SolverConfig:
    data = SolverConfig.from_file(args.config).to_dict() if args.config else {}
    overrides = {
        "newton_tol": args.newton_tol,
        "max_newton": args.max_newton,
        "preconditioner": args.preconditioner,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    if args.diagnostics:
        data["diagnostics"] = True
    return SolverConfig.from_dict(data)


def _write_reports(args, record: dict, title: str) -> None:
    print(format_record(record, title))
    if getattr(args, "report", None):
        write_key_values(args.report, record)
    if getattr(args, "report_json", None):
        write_json(args.report_json, record)


def _solve_record(result: NewtonResult, seconds_embed: float, embedding: dict) -> dict:
    record = solver_summary(result.report, seconds_embed)
    record["embedding"] = embedding
    return record


# ------------------------------------------------------------------
# Subcommands
# ------------------------------------------------------------------

def cmd_threshold(args) -> int:
    lam = _lambda_spec(args)
    source = read_samples(args.samples) if args.samples else read_matrix_market(args.cov).to_dense()
    C_H, report = threshold_blocks(source, lam, _prior(args), args.block_size, args.threads)
    write_matrix_market(args.out, C_H, comment="soft-thresholded covariance")
    record = report.to_dict()
    record["edges"] = C_H.pattern.num_edges
    _write_reports(args, record, "THRESHOLD")
    return EXIT_OK


def cmd_embed(args) -> int:
    G = read_pattern(args.pattern)
    t0 = time.perf_counter()
    E = symbolic_embed(G, fill_reducing_order(G, args.ordering), args.amalgamate)
    tree = build_clique_tree(E)
    stats = embedding_stats(E, tree)
    stats["seconds_embed"] = time.perf_counter() - t0
    if args.out:
        write_pattern(args.out, E.Gt, comment=f"chordal embedding, ordering={args.ordering}")
    _write_reports(args, stats, "EMBEDDING")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _solver_config(args)
    C = read_matrix_market(args.cov)
    t0 = time.perf_counter()
    E = symbolic_embed(C.pattern, fill_reducing_order(C.pattern, args.ordering), args.amalgamate)
    tree = build_clique_tree(E)
    seconds_embed = time.perf_counter() - t0
    stats = embedding_stats(E, tree)
    code = EXIT_OK
    try:
        result = newton_solve(C, E, cfg=cfg, tree=tree)
    except NotConvergedError as exc:
        if exc.result is None:
            raise
        print(f"covsel: {exc}", file=sys.stderr)
        result, code = exc.result, EXIT_NOT_CONVERGED
    if args.out:
        write_matrix_market(args.out, result.X, comment="max-det completion estimate")
    _write_reports(args, _solve_record(result, seconds_embed, stats), "SOLVE")
    return code


def cmd_estimate(args) -> int:
    lam = _lambda_spec(args)
    cfg = _solver_config(args)
    samples = read_samples(args.samples)
    try:
        result = estimate_precision(
            samples, lam, _prior(args), cfg, args.ordering, args.amalgamate, args.block_size, args.threads
        )
    except NotConvergedError as exc:
        if exc.result is None:
            raise
        print(f"covsel: {exc}", file=sys.stderr)
        _write_reports(args, solver_summary(exc.result.report), "ESTIMATE (not converged)")
        return EXIT_NOT_CONVERGED
    if args.out:
        write_matrix_market(args.out, result.X, comment="sparse inverse covariance estimate")
    rep = result.report
    th = rep.threshold.to_dict()
    for key in ("tie_examples", "zero_weight_examples"):
        th.pop(key)
    record = solver_summary(rep.solver, rep.seconds.get("embed"))
    record["seconds_threshold"] = rep.seconds.get("threshold", 0.0)
    record["threshold"] = th
    record["embedding"] = rep.embedding
    _write_reports(args, record, "ESTIMATE")
    return EXIT_OK


def cmd_check(args) -> int:
    lam = _lambda_spec(args)
    prior = _prior(args)
    C = read_matrix_market(args.cov).to_dense()
    diag = exactness_check(C, lam, prior)
    record = diag.to_dict()
    if args.estimate:
        X_hat = read_matrix_market(args.estimate)
        kkt = kkt_check(X_hat, C, lam, prior, args.kkt_tol)
        record["kkt_ok"] = kkt.ok
        record["kkt_max_violation"] = kkt.max_violation
        for v in kkt.violations:
            print(f"  {v.clause} ({v.i},{v.j}): {v.amount:.3e}")
    _write_reports(args, record, "EXACTNESS CHECK")
    for note in diag.notes:
        print(f"  - {note}")
    return EXIT_OK


def _parse_sizes(text: str) -> List[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--sizes must be comma-separated integers, got '{text}'")


def cmd_bench_banded(args) -> int:
    preset = dict(BENCH_PRESETS[args.preset])
    sizes = _parse_sizes(args.sizes) if args.sizes else preset["sizes"]
    bandwidth = args.bandwidth if args.bandwidth is not None else preset["bandwidth"]
    seed = args.seed if args.seed is not None else preset["seed"]
    amalgamate = args.amalgamate if args.amalgamate is not None else preset["amalgamate"]
    ordering = args.ordering or preset["ordering"]
    report = scaling_run(sizes, bandwidth, seed, ordering=ordering, amalgamate=amalgamate)
    rows = [vars(r) for r in report.rows]
    print(format_table(rows, ["n", "m", "newton_steps", "cg_median", "gap", "feas", "seconds_embed", "seconds_solve", "error"],
                       f"BANDED SCALING  bandwidth={bandwidth} seed={seed}"))
    print(f"  slope: {report.slope if report.slope is not None else '-'}   cg ratio: {report.cg_ratio or '-'}")
    record = report.to_dict()
    if args.out:
        flat = {"bandwidth": bandwidth, "seed": seed, "slope": report.slope, "cg_ratio": report.cg_ratio}
        for r in report.rows:
            flat[f"n{r.n}"] = vars(r)
        write_key_values(args.out, flat)
    if args.report_json:
        write_json(args.report_json, record)
    return EXIT_OK if all(r.ok for r in report.rows) else EXIT_NOT_CONVERGED


def cmd_bench_graph(args) -> int:
    G = read_pattern(args.pattern)
    rows = graph_case_run(G, args.samples, args.seed, args.lam)
    table = [vars(r) for r in rows]
    print(format_table(table, ["variant", "n", "m", "edges", "gap", "feas", "relative_difference", "seconds", "error"],
                       f"GRAPH CASE  n={G.n} N={args.samples} seed={args.seed}"))
    if args.out:
        write_key_values(args.out, {r.variant: vars(r) for r in rows})
    if args.report_json:
        write_json(args.report_json, {"rows": table})
    return EXIT_OK if not any(r.error for r in rows) else EXIT_NOT_CONVERGED


COMMANDS = {
    "threshold": cmd_threshold,
    "embed": cmd_embed,
    "solve": cmd_solve,
    "estimate": cmd_estimate,
    "check": cmd_check,
}


def dispatch(argv: Optional[List[str]] = None) -> int:
    """Parse argv, run one subcommand and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _configure_logging(args.verbose)
    if args.threads is None:
        args.threads = default_threads()
    elif args.threads < 1:
        print("covsel: --threads must be at least 1", file=sys.stderr)
        return EXIT_BAD_INPUT

    if args.command == "bench":
        handler = cmd_bench_banded if args.bench == "banded" else cmd_bench_graph
    else:
        handler = COMMANDS[args.command]
    try:
        return handler(args)
    except NotConvergedError as exc:
        print(f"covsel: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (CovselError, ValueError, OSError) as exc:
        print(f"covsel: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


def main() -> None:
    sys.exit(dispatch())
