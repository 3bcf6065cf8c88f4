"""Command-line front end: ``fhbvm solve | wpd | list``."""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .problems import PROBLEMS, get_problem, mescd
from .solver import EvaluationError, SolveOptions, StepFailure, solve

EXIT_USAGE = 2
EXIT_SOLVER = 3


@dataclass
class RunRecord:
    problem: str
    alpha: float
    M: int
    mesh: str
    N: int
    k: int
    s: int
    wall_time_sec: float
    mescd: float
    max_abs_err: float
    max_est_err: Optional[float] = None


def _fmt(x) -> str:
    return "%.17g" % x


def _opts(args) -> SolveOptions:
    return SolveOptions(mesh=args.mesh, r=args.r, k=args.k, s=args.s,
                        error_estimate=getattr(args, "error_estimate", False))


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", newline="\n"), True


def write_trajectory(fh, fmt, t, y, err=None, meta=None):
    m = y.shape[1]
    if fmt == "json":
        doc = {"t": t.tolist(), "y": y.tolist()}
        if err is not None:
            doc["err"] = err.tolist()
        if meta:
            doc["summary"] = meta
        json.dump(doc, fh)
        fh.write("\n")
        return
    header = ["t"] + [f"y{i + 1}" for i in range(m)]
    if err is not None:
        header += [f"err{i + 1}" for i in range(m)]
    fh.write(",".join(header) + "\n")
    for n in range(len(t)):
        row = [t[n], *y[n]] + (list(err[n]) if err is not None else [])
        fh.write(",".join(_fmt(v) for v in row) + "\n")


def cmd_solve(args) -> int:
    bp = get_problem(args.problem, args.alpha)
    res = solve(bp.problem, args.M, _opts(args))
    elapsed = res.stats.wall_time
    summary = {"problem": bp.id, "alpha": bp.alpha, "M": args.M, "mesh": res.mesh.kind,
               "N": res.mesh.N, "time_sec": elapsed}
    if bp.problem.exact is not None:
        summary["mescd"] = mescd(bp.exact_on(res.t), res.y)
    fh, close = _open_out(args.out)
    try:
        write_trajectory(fh, args.format, res.t, res.y, res.err_estimate, summary if args.format == "json" else None)
    finally:
        if close:
            fh.close()
    parts = [f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in summary.items()]
    print(" ".join(parts), file=sys.stderr)
    return 0


def run_record(bp, M, opts: SolveOptions) -> RunRecord:
    t0 = time.perf_counter()
    try:
        res = solve(bp.problem, M, opts)
    except (StepFailure, EvaluationError) as exc:
        print(f"M={M}: solver failed: {exc}", file=sys.stderr)
        return RunRecord(bp.id, bp.alpha, M, opts.mesh, 0, opts.k, opts.s,
                         time.perf_counter() - t0, math.nan, math.nan)
    elapsed = time.perf_counter() - t0
    ref = bp.exact_on(res.t)
    est = float(np.max(res.err_estimate)) if res.err_estimate is not None else None
    return RunRecord(bp.id, bp.alpha, M, res.mesh.kind, res.mesh.N, opts.k, opts.s, elapsed,
                     mescd(ref, res.y), float(np.max(np.abs(ref - res.y))), est)


def cmd_wpd(args) -> int:
    bp = get_problem(args.problem, args.alpha)
    try:
        Ms = [int(v) for v in args.M.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"--M expects a comma-separated list of integers, got {args.M!r}")
    if not Ms or min(Ms) < 1:
        raise ValueError("--M values must be positive integers")
    opts = _opts(args)
    records = [run_record(bp, M, opts) for M in sorted(Ms)]
    fh, close = _open_out(args.out)
    try:
        if args.format == "json":
            json.dump([asdict(r) for r in records], fh, indent=1)
            fh.write("\n")
        else:
            fh.write("M,N,time_sec,mescd,max_abs_err\n")
            for r in records:
                fh.write(",".join([str(r.M), str(r.N), _fmt(r.wall_time_sec), _fmt(r.mescd),
                                   _fmt(r.max_abs_err)]) + "\n")
    finally:
        if close:
            fh.close()
    return 0


def cmd_list(args=None) -> int:
    for pid, ((lo, hi), default, fixed, T, notes) in PROBLEMS.items():
        rng = f"alpha = {default} (fixed)" if fixed else f"alpha in ({lo:g}, {hi:g}), default {default}"
        print(f"{pid}  {rng}  T={T:g}  {notes}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fhbvm", description="FHBVM solver for Caputo FDE-IVPs")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, m_help, m_default=None):
        sp.add_argument("--problem", required=True, help="benchmark id (see `fhbvm list`)")
        sp.add_argument("--alpha", type=float, default=None)
        if m_default is None:
            sp.add_argument("--M", required=True, type=int, help=m_help)
        else:
            sp.add_argument("--M", default=m_default, help=m_help)
        sp.add_argument("--mesh", choices=["auto", "graded", "uniform"], default="auto")
        sp.add_argument("--r", type=float, default=None, help="graded mesh ratio")
        sp.add_argument("--k", type=int, default=22)
        sp.add_argument("--s", type=int, default=20)
        sp.add_argument("--out", default=None, help="output path (default stdout)")
        sp.add_argument("--format", choices=["csv", "json"], default="csv")

    sp = sub.add_parser("solve", help="solve one benchmark problem")
    common(sp, "largest step is about T/M")
    sp.add_argument("--error-estimate", action="store_true", help="doubled-mesh error estimate")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("wpd", help="work-precision data over several M")
    common(sp, "comma-separated M values", "2,3,4,5")
    sp.set_defaults(func=cmd_wpd)

    sp = sub.add_parser("list", help="list benchmark problems")
    sp.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (StepFailure, EvaluationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
