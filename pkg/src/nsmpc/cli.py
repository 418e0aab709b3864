"""``nsmpc`` command line: gen | solve | simulate | sweep | profile.

Exit codes: 0 success, 1 usage or input error, 2 solver failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional

import numpy as np

from . import bench
from .ipm import SolverOptions
from .problem import ProblemError, objective_value

EXIT_OK, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, steps: bool = False):
    p.add_argument("--family", choices=["random", "mass-spring", "file"], default="random")
    p.add_argument("--nx", type=int, default=12)
    p.add_argument("--nu", type=int, default=3)
    p.add_argument("--T", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dt", type=float, default=0.5, help="mass-spring sample time")
    p.add_argument("--problem", help="problem JSON (implies --family file)")
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--format", choices=["csv", "json"], default="json")
    if steps:
        p.add_argument("--steps", type=int, default=50)


def _solver_args(p: argparse.ArgumentParser):
    p.add_argument("--solver", choices=sorted(bench.SOLVERS), default="nullspace")
    p.add_argument("--opts", help="solver options as a JSON object")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nsmpc", description="Null-space interior-point MPC benchmark")
    sub = parser.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="write a generated problem as JSON")
    _common(p)

    p = sub.add_parser("solve", help="solve one QP")
    _common(p)
    _solver_args(p)

    p = sub.add_parser("simulate", help="closed-loop receding-horizon simulation")
    _common(p, steps=True)
    _solver_args(p)

    p = sub.add_parser("sweep", help="time per Newton iteration over a grid")
    _common(p)
    p.set_defaults(format="csv")
    p.add_argument("--solver", action="append", choices=sorted(bench.SOLVERS),
                   help="repeatable; default both solvers")
    p.add_argument("--opts", help="solver options as a JSON object")
    p.add_argument("--axis", choices=["n_u", "T", "n_x"], required=True)
    p.add_argument("--grid", required=True, help="comma-separated values, e.g. 1,5,10")
    p.add_argument("--repeats", type=int, default=5)

    p = sub.add_parser("profile", help="Dolan-More profile from sweep CSV reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("--cost", default="time_per_iter_us")
    p.add_argument("--out")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    return parser


def _problem(args):
    family = "file" if args.problem else args.family
    return bench.generate(family, args.nx, args.nu, args.T, args.seed, args.dt, args.problem)


def _opts(args) -> SolverOptions:
    try:
        return SolverOptions.from_json(args.opts)
    except (ValueError, TypeError) as err:
        raise UsageError(f"--opts: {err}") from None


def _emit(text: str, out: Optional[str]):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(rows, fmt, out, columns=None):
    if fmt == "json":
        _emit(json.dumps(rows, indent=2) + "\n", out)
    else:
        _emit(bench.rows_to_csv(rows, columns), out)


def cmd_gen(args) -> int:
    _emit(_problem(args).dumps() + "\n", args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    prob = _problem(args)
    solver = bench.make_solver(prob, args.solver, _opts(args))
    res = solver.solve()
    qp = solver.qp_for()
    row = {
        "solver": args.solver, "status": res.status.value, "iters": res.iterations,
        "objective": objective_value(qp, res.y), "residual": res.residual, "mu": res.mu,
        "total_us": res.solve_time * 1e6, "time_per_iter_us": res.time_per_iter * 1e6,
        "setup_us": solver.setup_time * 1e6, "u0": res.u0.tolist(),
    }
    if args.format == "json":
        row["u"] = res.u.tolist()
    _dump([row], args.format, args.out)
    return EXIT_OK if res.converged else EXIT_SOLVER


def cmd_simulate(args) -> int:
    prob = _problem(args)
    if args.steps < 1:
        raise UsageError("--steps must be positive")
    rows = bench.closed_loop(prob, bench.make_solver(prob, args.solver, _opts(args)), args.steps)
    if args.format == "csv":
        rows = [{k: (json.dumps(v) if isinstance(v, list) else v) for k, v in r.items()}
                for r in rows]
    _dump(rows, args.format, args.out)
    ok = len(rows) == args.steps and all(r["status"] == "Converged" for r in rows)
    return EXIT_OK if ok else EXIT_SOLVER


def cmd_sweep(args) -> int:
    try:
        grid = [int(v) for v in args.grid.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--grid must be comma-separated integers, got {args.grid!r}") from None
    rows = bench.timing_sweep(args.axis, grid, args.nx, args.nu, args.T,
                              args.solver or sorted(bench.SOLVERS), args.family, args.seed,
                              args.repeats, _opts(args))
    _dump(rows, args.format, args.out, bench.SWEEP_COLUMNS)
    return EXIT_OK if all(r["status"] == "Converged" for r in rows) else EXIT_SOLVER


def cmd_profile(args) -> int:
    rows = []
    for path in args.reports:
        rows.extend(bench.read_csv(path))
    _dump(bench.perf_profile(rows, args.cost), args.format, args.out)
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "solve": cmd_solve, "simulate": cmd_simulate,
            "sweep": cmd_sweep, "profile": cmd_profile}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.cmd](args)
    except (UsageError, ProblemError, ValueError, KeyError, OSError) as err:
        print(f"nsmpc {args.cmd}: {err}", file=sys.stderr)
        return EXIT_USAGE
    except np.linalg.LinAlgError as err:
        print(f"nsmpc {args.cmd}: numerical failure: {err}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
